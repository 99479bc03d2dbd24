#pragma once

#include "swmpc/polytope.hpp"

#include <utility>
#include <vector>

namespace swmpc {

// One controlled mode: x+ = A x + B u with x constrained to X and u to U.
struct ModeDynamics {
  Matrix A;
  Matrix B;
  Polytope X;
  Polytope U;
  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
};

// Admissible mode transitions with per-mode dwell times. Vertices are modes
// 0..num_modes-1; an edge (i, j) permits switching from i to j once mode i's
// dwell has elapsed.
struct SwitchGraph {
  int num_modes = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> dwell;

  bool has_edge(int i, int j) const;
  std::vector<int> successors(int i) const;
  void validate() const; // throws std::invalid_argument
};

struct FixedPointResult {
  Polytope set;
  int iterations = 0;
  bool converged = false;
};

struct SwitchRciResult {
  std::vector<Polytope> sets; // one per mode
  int iterations = 0;
  bool converged = false;
  bool any_empty() const;
};

// One-step controllable predecessor within the mode's state constraints:
// {x in X : exists u in U with A x + B u in target}.
Polytope pre_set(const Polytope& target, const ModeDynamics& dyn);

// k-fold composition of pre_set (k = 0 returns target intersected with X).
Polytope pre_k(const Polytope& target, const ModeDynamics& dyn, int k);

// Outer invariant approximation for x+ = F x + w, w in W, F Schur stable,
// W bounded and containing the origin. Picks the smallest power s with
// F^s W inside alpha W for alpha <= eps / (eps + M(s)), then returns
// (1 - alpha)^{-1} (W + F W + ... + F^{s-1} W). The result Z satisfies
// F Z + W inside Z and is within eps of the minimal invariant set.
Polytope mrpi_approx(const Matrix& F, const Polytope& W, double eps);

// Largest subset of X from which the state can be kept in X forever:
// fixed point of S -> S intersect pre_set(S).
FixedPointResult max_control_invariant(const ModeDynamics& dyn,
                                       int max_iter = tol::max_set_iterations,
                                       double tol = tol::set_equality);

// Fixed point of the family update
//   C_i <- C_i  intersect  pre_i(C_i)  intersect  pre_j^{d_j}(C_j)  over edges (i, j),
// seeded from the given per-mode sets. The converged family is invariant
// under any dwell-respecting switching signal on the graph.
SwitchRciResult switch_rci(const std::vector<ModeDynamics>& modes,
                           const SwitchGraph& graph,
                           const std::vector<Polytope>& seeds,
                           int max_iter = tol::max_set_iterations,
                           double tol = tol::set_equality);

// Whether x0, observed in mode0 with delta0 steps of dwell remaining, can be
// steered into the family: x0 in pre_{mode0}^{delta0}(C_{mode0}).
bool initial_condition_ok(const Vector& x0, int mode0, int delta0,
                          const std::vector<ModeDynamics>& modes,
                          const std::vector<Polytope>& rci_sets);

// Re-derives the invariance obligations of a converged family: every set
// sits inside its mode's constraints and one-step preimage, and inside the
// d_j-step preimage of each admissible successor's set.
bool switch_rci_certificate(const std::vector<ModeDynamics>& modes,
                            const SwitchGraph& graph,
                            const std::vector<Polytope>& sets,
                            double tol = tol::set_equality);

} // namespace swmpc
