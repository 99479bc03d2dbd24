#pragma once

#include "swmpc/controller.hpp"

#include <optional>
#include <string>
#include <vector>

namespace swmpc {

enum class Strategy { dswmpc, cswmpc, deswmpc };
std::string to_string(Strategy s);

struct ControllerParams {
  int horizon = 5;
  double mrpi_eps = 1e-4;
  double set_tol = tol::set_equality;
  int max_set_iter = tol::max_set_iterations;
  std::vector<double> state_tube; // per-subsystem reference tube halfwidth
  std::vector<double> input_tube;
  std::vector<Matrix> Q; // per subsystem; empty entry means identity
  std::vector<Matrix> R;
  // Non-cooperative design knobs. Without reference exchange the coupling
  // bound has to come from an assumed neighbor operating envelope, expressed
  // as a fraction of each neighbor's constraint set.
  double neighbor_envelope = 1.0;
  std::vector<Matrix> decentralized_R; // falls back to R when empty
};

struct ExperimentSpec {
  std::string name;
  NetworkModel network;
  SwitchingSignal signal;
  ControllerParams params;
  std::vector<Vector> x0;
  int steps = 15;
};

struct SubsystemStep {
  Vector x;    // state at t
  Vector u;    // applied input; empty on the final record
  Vector xhat; // nominal plan head; empty when no solve happened
  Vector xhat_terminal;
  Vector x_ref; // reference head in force at this step; empty when none
  bool feasible = true;
  double cost = 0.0;
  double solve_ms = 0.0;
};

struct Step {
  int t = 0;
  int mode = 0;
  int delta = 0;
  std::vector<SubsystemStep> subs;
};

struct SimulationTrace {
  std::vector<int> nx, nu;
  std::vector<Step> steps; // t = 0..T; final record holds states only
  int first_infeasible_t = -1;
  bool any_infeasible() const { return first_infeasible_t >= 0; }
};

struct SseReport {
  std::vector<Vector> per_state;      // per subsystem, summed over t = 0..T
  std::vector<double> per_subsystem;
  double total = 0.0;
};

// Per-subsystem design artifacts of the local tube controllers.
struct LocalArtifacts {
  Matrix K, P, Q, R;
  Polytope E, Eu;
  std::vector<ModeSets> sets; // indexed by realized mode when per_mode
  bool per_mode = false;
  bool consistency = false;
  std::vector<Polytope> rci; // maximal invariant family for the entry test
  bool entry_ok = false;     // x0 inside the family's backward reach
};

// Stacked-system artifacts of the centralized baseline.
struct CentralArtifacts {
  std::vector<Matrix> K; // per-subsystem fallback gains
  Matrix P;
  std::vector<ModeDynamics> global_modes;
  std::vector<Polytope> T; // maximal switch-invariant family, also terminal
  bool entry_ok = false;
};

enum class RunOutcome { ok, refused, design_failed, runtime_infeasible };
std::string to_string(RunOutcome o);

struct RunResult {
  Strategy strategy = Strategy::dswmpc;
  RunOutcome outcome = RunOutcome::ok;
  std::string detail;
  SimulationTrace trace;
  SseReport sse;
  std::vector<LocalArtifacts> locals;
  std::optional<CentralArtifacts> central;
  double design_seconds = 0.0;
};

RunResult run_dswmpc(const ExperimentSpec& spec);
RunResult run_cswmpc(const ExperimentSpec& spec);
RunResult run_deswmpc(const ExperimentSpec& spec);
RunResult run_strategy(const ExperimentSpec& spec, Strategy s);

// Controller synthesis only: fills the design artifacts and the entry test
// without simulating. The trace stays empty.
RunResult design_strategy(const ExperimentSpec& spec, Strategy s);

// Sum of squared states over t = 0..T, including both endpoints.
SseReport sse_report(const SimulationTrace& trace);

struct AuditIssue {
  int t = 0;
  int subsystem = -1; // -1 for network-level checks
  std::string check;
  double magnitude = 0.0;
};

struct AuditReport {
  bool ok = true;
  std::vector<AuditIssue> issues;
};

// Replays a finished run against the recorded design artifacts: constraint
// membership, tube containment, reference fidelity, dwell bookkeeping, and
// terminal membership of the recorded plan heads.
AuditReport audit_trace(const RunResult& run, const ExperimentSpec& spec);

} // namespace swmpc
