#pragma once

#include "swmpc/invariants.hpp"
#include "swmpc/model.hpp"
#include "swmpc/qp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace swmpc {

struct DesignError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// LQR gain for x+ = Ax + Bu with u = Kx; requires the closed loop to come
// out Schur stable.
Matrix design_feedback_gain(const Matrix& A, const Matrix& B,
                            const Matrix& Q, const Matrix& R);

// P solving F'PF - P = -(Q + K'RK) for F = A + BK.
Matrix terminal_weight(const Matrix& A, const Matrix& B, const Matrix& K,
                       const Matrix& Q, const Matrix& R);

// Constraint bundle of one subsystem under one disturbance set.
struct ModeSets {
  Polytope W;    // interaction reach set feeding the tube
  Polytope Z;    // tube cross-section, invariant for A + BK
  Polytope dE;   // nominal-state deviation budget from the published reference
  Polytope dU;   // nominal-input deviation budget
  Polytope Xhat; // tightened state constraints
  Polytope Uhat; // tightened input constraints
  Polytope Xf;   // positively invariant seed for the terminal computation
  Polytope T;    // terminal set; filled by terminal_switch_sets
};

// Derives Z and the tightened sets from W and certifies the tube:
// (A+BK) Z + W inside Z, dE + Z inside E, dU + K Z inside Eu, all at 1e-7.
// Emptiness of a set that the caller needs is a design error; dE/dU may be
// empty when require_consistency is false.
ModeSets compute_mode_sets(const Subsystem& sub, const Matrix& K,
                           const Polytope& W, const Polytope& E,
                           const Polytope& Eu, double mrpi_eps,
                           bool require_consistency);

// Largest positively invariant subset of {x in Xhat : Kx in Uhat} under
// x+ = (A + BK) x.
Polytope terminal_region_seed(const Matrix& F, const Polytope& Xhat,
                              const Polytope& Uhat, const Matrix& K,
                              int max_iter = tol::max_set_iterations,
                              double tol = tol::set_equality);

// Terminal family over the design modes: switch-aware fixed point seeded
// from each mode's invariant seed, using the tightened constraints.
std::vector<Polytope> terminal_switch_sets(const std::vector<ModeDynamics>& tight,
                                           const SwitchGraph& graph,
                                           const std::vector<Polytope>& seeds,
                                           int max_iter = tol::max_set_iterations,
                                           double tol = tol::set_equality);

struct ReferenceTrajectory {
  std::vector<Vector> x; // length N+1
  std::vector<Vector> u; // length N
};

ReferenceTrajectory zero_reference(int nx, int nu, int N);

// Drops the first entry and extends with the feedback continuation
// u = K x(N), x(N+1) = (A + BK) x(N).
ReferenceTrajectory shift_reference(const ReferenceTrajectory& ref, const Matrix& A,
                                    const Matrix& B, const Matrix& K);

// One subsystem's finite-horizon problem at one time step. The nominal
// initial state is a decision variable tied to the measurement through Z;
// neighbor influence enters as a known injection sequence.
struct LocalOcp {
  Matrix A, B, K, Q, R, P;
  int N = 0;
  int delta = 0; // terminal rows apply from prediction index delta on
  Polytope Z, Xhat, Uhat, T;
  Polytope dE, dU;
  Vector x;
  std::vector<Vector> injection;             // length N, may be empty for zero
  const ReferenceTrajectory* own_ref = nullptr; // consistency rows when set
};

struct LocalSolution {
  bool feasible = false;
  std::vector<Vector> xhat; // length N+1
  std::vector<Vector> uhat; // length N
  double cost = 0.0;
  double kkt_residual = 0.0;
  int qp_iterations = 0;
  double max_violation = 0.0;             // residual of the returned trajectory
  std::vector<std::string> violated;      // families blocking feasibility
};

LocalSolution solve_local_ocp(const LocalOcp& ocp);

// Tube feedback around the nominal plan.
Vector control_input(const Vector& x, const Vector& xhat0, const Vector& uhat0,
                     const Matrix& K);

} // namespace swmpc
