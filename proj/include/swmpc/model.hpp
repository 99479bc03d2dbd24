#pragma once

#include "swmpc/invariants.hpp"
#include "swmpc/polytope.hpp"

#include <map>
#include <string>
#include <vector>

namespace swmpc {

// Directed coupling j -> i: contribution A x_j + B u_j to subsystem i.
// A zero-sized B stands for no input coupling.
struct Coupling {
  Matrix A;
  Matrix B;
};

struct Subsystem {
  Matrix A; // local dynamics
  Matrix B;
  std::map<int, Coupling> couplings; // keyed by neighbor index
  Polytope X;
  Polytope U;
  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
};

// Active neighbor sets of one interconnection topology (one mode).
struct ModeTopology {
  std::vector<std::vector<int>> neighbors; // per subsystem, ascending, no self
};

struct NetworkModel {
  std::vector<Subsystem> subsystems;
  std::vector<ModeTopology> topologies;
  int num_subsystems() const { return static_cast<int>(subsystems.size()); }
  int num_modes() const { return static_cast<int>(topologies.size()); }
  void validate() const; // throws std::invalid_argument
};

enum class Visibility { times_and_modes_known, modes_restricted, fully_unknown };

// Realized switching sequence plus what the controllers are allowed to know
// about it ahead of time.
struct SwitchingSignal {
  Visibility visibility = Visibility::fully_unknown;
  std::vector<std::pair<int, int>> schedule; // (time, mode), first entry at t=0
  SwitchGraph graph;
  // Per subsystem: indices that may ever act as neighbors. Used when the
  // realized topologies are not enumerable in advance. Empty means "all
  // declared couplings".
  std::vector<std::vector<int>> allowable_neighbors;

  int mode_at(int t) const;
  std::vector<int> mode_sequence(int steps) const; // t = 0..steps
  void validate(int num_modes) const;
};

struct DwellState {
  int mode = 0;
  int remaining = 0; // steps before the next switch becomes admissible
};

// Synchronous network step under the given topology.
std::vector<Vector> plant_step(const NetworkModel& net, int mode,
                               const std::vector<Vector>& x,
                               const std::vector<Vector>& u);

// Coupling reach set of subsystem i under one topology: the Minkowski sum of
// A_ij E_j + B_ij Eu_j over active neighbors. Zero couplings contribute {0}.
Polytope interaction_disturbance_set(const NetworkModel& net, int subsystem, int mode,
                                     const std::vector<Polytope>& E,
                                     const std::vector<Polytope>& Eu);

// Same sum over every allowable neighbor, independent of the realized mode.
Polytope worst_case_disturbance_set(const NetworkModel& net, int subsystem,
                                    const std::vector<int>& allowable,
                                    const std::vector<Polytope>& E,
                                    const std::vector<Polytope>& Eu);

// Dwell bookkeeping: staying decrements toward 0, switching reloads the
// target mode's dwell time.
DwellState remaining_dwell_update(const DwellState& s, int next_mode,
                                  const SwitchGraph& graph);

struct SignalCheck {
  bool valid = true;
  int index = -1; // first offending time step
  std::string reason;
};

// Checks a realized mode sequence against the graph: declared modes only,
// transitions along edges, and every maximal run at least as long as the
// mode's dwell time (the final run may be truncated by the end of data).
SignalCheck validate_signal(const std::vector<int>& modes, const SwitchGraph& graph);

} // namespace swmpc
