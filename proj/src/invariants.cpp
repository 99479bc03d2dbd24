#include "swmpc/invariants.hpp"

#include "swmpc/lp.hpp"
#include "swmpc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace swmpc {

bool SwitchGraph::has_edge(int i, int j) const {
  for (const auto& e : edges)
    if (e.first == i && e.second == j) return true;
  return false;
}

std::vector<int> SwitchGraph::successors(int i) const {
  std::vector<int> out;
  for (const auto& e : edges)
    if (e.first == i) out.push_back(e.second);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void SwitchGraph::validate() const {
  if (num_modes < 1) throw std::invalid_argument("SwitchGraph: no modes");
  if (static_cast<int>(dwell.size()) != num_modes)
    throw std::invalid_argument("SwitchGraph: dwell size mismatch");
  for (int d : dwell)
    if (d < 1) throw std::invalid_argument("SwitchGraph: dwell times must be >= 1");
  for (const auto& e : edges) {
    if (e.first < 0 || e.first >= num_modes || e.second < 0 || e.second >= num_modes)
      throw std::invalid_argument("SwitchGraph: edge endpoint out of range");
    if (e.first == e.second)
      throw std::invalid_argument("SwitchGraph: self edges are implicit");
  }
}

bool SwitchRciResult::any_empty() const {
  for (const auto& s : sets)
    if (s.is_empty()) return true;
  return false;
}

Polytope pre_set(const Polytope& target, const ModeDynamics& dyn) {
  const int n = dyn.nx();
  const int m = dyn.nu();
  if (dyn.A.cols() != n || dyn.B.rows() != n)
    throw std::invalid_argument("pre_set: dynamics dimension mismatch");
  if (target.dim() != n || dyn.X.dim() != n || dyn.U.dim() != m)
    throw std::invalid_argument("pre_set: set dimension mismatch");
  if (dyn.U.is_empty()) throw std::invalid_argument("pre_set: empty input set");
  if (target.is_empty() || dyn.X.is_empty()) return Polytope::empty_set(n);

  // Lift over (x, u): A_T (A x + B u) <= b_T and u in U, then drop u.
  Matrix liftA(target.num_rows() + dyn.U.num_rows(), n + m);
  Vector liftB(liftA.rows());
  liftA.setZero();
  if (target.num_rows() > 0) {
    liftA.topLeftCorner(target.num_rows(), n) = target.normals() * dyn.A;
    liftA.topRightCorner(target.num_rows(), m) = target.normals() * dyn.B;
    liftB.head(target.num_rows()) = target.offsets();
  }
  if (dyn.U.num_rows() > 0) {
    liftA.bottomRightCorner(dyn.U.num_rows(), m) = dyn.U.normals();
    liftB.tail(dyn.U.num_rows()) = dyn.U.offsets();
  }
  Polytope lifted = Polytope::from_inequalities(liftA, liftB);
  if (lifted.is_empty()) return Polytope::empty_set(n);
  std::vector<int> ucols(m);
  std::iota(ucols.begin(), ucols.end(), n);
  Polytope pre = lifted.is_whole_space() ? Polytope::whole_space(n)
                                         : project_out(lifted, ucols);
  return intersect(pre, dyn.X);
}

Polytope pre_k(const Polytope& target, const ModeDynamics& dyn, int k) {
  if (k < 0) throw std::invalid_argument("pre_k: negative order");
  if (k == 0) return intersect(target, dyn.X);
  Polytope s = target;
  for (int i = 0; i < k; ++i) {
    s = pre_set(s, dyn);
    if (s.is_empty()) break;
  }
  return s;
}

Polytope mrpi_approx(const Matrix& F, const Polytope& W, double eps) {
  const int n = static_cast<int>(F.rows());
  if (F.cols() != n) throw std::invalid_argument("mrpi_approx: F must be square");
  if (W.dim() != n) throw std::invalid_argument("mrpi_approx: dimension mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("mrpi_approx: eps must be positive");
  if (W.is_empty()) throw std::invalid_argument("mrpi_approx: empty disturbance set");
  if (!is_schur(F, tol::schur_margin))
    throw std::invalid_argument("mrpi_approx: F not Schur stable");
  if (!W.is_bounded()) throw std::invalid_argument("mrpi_approx: unbounded disturbance set");
  Vector zero = Vector::Zero(n);
  if (!W.contains(zero, 1e-9))
    throw std::invalid_argument("mrpi_approx: disturbance set must contain the origin");

  if (W.is_singleton()) return Polytope::singleton(zero);

  // Support arithmetic: h_{F^k W}(d) = h_W((F^k)' d).
  auto support_w = [&](const Vector& d) { return W.support(d); };

  const int s_max = 300;
  Matrix Fk = Matrix::Identity(n, n); // F^s, starts at s = 0
  int s = 0;
  double alpha = 0.0;
  while (true) {
    ++s;
    Fk = F * Fk;
    if (s > s_max) throw std::runtime_error("mrpi_approx: no admissible power found");

    // alpha0(s) = max_k h_W((F^s)' a_k) / b_k over rows of W.
    double a0 = 0.0;
    bool ok = true;
    for (int k = 0; k < W.num_rows(); ++k) {
      double num = support_w(Fk.transpose() * W.normals().row(k).transpose());
      double den = W.offsets()[k];
      if (den <= 1e-12) {
        if (num > 1e-12) { ok = false; break; }
        continue;
      }
      a0 = std::max(a0, num / den);
    }
    if (!ok) continue;

    // M(s) = max_j max( sum_k h_W((F^k)' e_j), sum_k h_W(-(F^k)' e_j) ).
    double M = 0.0;
    Matrix Fi = Matrix::Identity(n, n);
    Vector plus = Vector::Zero(n), minus = Vector::Zero(n);
    for (int k = 0; k < s; ++k) {
      for (int j = 0; j < n; ++j) {
        Vector e = Vector::Zero(n);
        e[j] = 1.0;
        plus[j] += support_w(Fi.transpose() * e);
        minus[j] += support_w(-(Fi.transpose() * e));
      }
      Fi = F * Fi;
    }
    for (int j = 0; j < n; ++j) M = std::max({M, plus[j], minus[j]});
    if (M <= 0.0) return Polytope::singleton(zero);

    if (a0 <= eps / (eps + M)) {
      alpha = a0;
      break;
    }
  }

  // Z = (1 - alpha)^{-1} (W + F W + ... + F^{s-1} W).
  Polytope Zsum = W;
  Matrix Fi = F;
  for (int k = 1; k < s; ++k) {
    Zsum = minkowski_sum(Zsum, affine_image(W, Fi));
    Fi = F * Fi;
  }
  return scale(Zsum, 1.0 / (1.0 - alpha));
}

FixedPointResult max_control_invariant(const ModeDynamics& dyn, int max_iter, double tol) {
  FixedPointResult out;
  Polytope omega = dyn.X;
  for (int it = 1; it <= max_iter; ++it) {
    Polytope next = intersect(omega, pre_set(omega, dyn));
    out.iterations = it;
    if (is_subset(omega, next, tol) && is_subset(next, omega, tol)) {
      out.set = next;
      out.converged = true;
      return out;
    }
    omega = std::move(next);
    if (omega.is_empty()) {
      out.set = omega;
      out.converged = true;
      return out;
    }
  }
  out.set = omega;
  return out;
}

SwitchRciResult switch_rci(const std::vector<ModeDynamics>& modes,
                           const SwitchGraph& graph,
                           const std::vector<Polytope>& seeds,
                           int max_iter, double tol) {
  graph.validate();
  const int M = graph.num_modes;
  if (static_cast<int>(modes.size()) != M || static_cast<int>(seeds.size()) != M)
    throw std::invalid_argument("switch_rci: family size mismatch");
  for (int i = 0; i < M; ++i)
    if (seeds[i].dim() != modes[i].nx())
      throw std::invalid_argument("switch_rci: seed dimension mismatch");

  SwitchRciResult out;
  out.sets.resize(M);
  for (int i = 0; i < M; ++i) out.sets[i] = intersect(seeds[i], modes[i].X);

  std::vector<char> is_successor(M, 0);
  for (const auto& e : graph.edges) is_successor[e.second] = 1;

  for (int it = 1; it <= max_iter; ++it) {
    // Synchronous update: every mode reads the previous iterates. The dwell
    // predecessor of each target mode is shared across incoming edges.
    std::vector<Polytope> dwell_pre(M);
    parallel_for(M, [&](int j) {
      if (is_successor[j])
        dwell_pre[j] = pre_k(out.sets[j], modes[j], graph.dwell[j]);
    });
    std::vector<Polytope> next(M);
    parallel_for(M, [&](int i) {
      Polytope s = intersect(out.sets[i], pre_set(out.sets[i], modes[i]));
      for (const auto& e : graph.edges) {
        if (e.first != i) continue;
        if (s.is_empty()) break;
        s = intersect(s, dwell_pre[e.second]);
      }
      next[i] = std::move(s);
    });
    out.iterations = it;
    bool same = true;
    for (int i = 0; i < M && same; ++i)
      same = is_subset(out.sets[i], next[i], tol) && is_subset(next[i], out.sets[i], tol);
    out.sets = std::move(next);
    if (same) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

bool initial_condition_ok(const Vector& x0, int mode0, int delta0,
                          const std::vector<ModeDynamics>& modes,
                          const std::vector<Polytope>& rci_sets) {
  if (mode0 < 0 || mode0 >= static_cast<int>(modes.size()))
    throw std::invalid_argument("initial_condition_ok: mode out of range");
  if (modes.size() != rci_sets.size())
    throw std::invalid_argument("initial_condition_ok: family size mismatch");
  if (delta0 < 0) throw std::invalid_argument("initial_condition_ok: negative dwell");
  Polytope reach = pre_k(rci_sets[mode0], modes[mode0], delta0);
  return reach.contains(x0, tol::membership);
}

bool switch_rci_certificate(const std::vector<ModeDynamics>& modes,
                            const SwitchGraph& graph,
                            const std::vector<Polytope>& sets, double tol) {
  graph.validate();
  const int M = graph.num_modes;
  if (static_cast<int>(modes.size()) != M || static_cast<int>(sets.size()) != M)
    throw std::invalid_argument("switch_rci_certificate: family size mismatch");
  for (int i = 0; i < M; ++i) {
    if (sets[i].is_empty()) return false;
    if (!is_subset(sets[i], modes[i].X, tol)) return false;
    if (!is_subset(sets[i], pre_set(sets[i], modes[i]), tol)) return false;
  }
  for (const auto& e : graph.edges) {
    const Polytope reach = pre_k(sets[e.second], modes[e.second], graph.dwell[e.second]);
    if (!is_subset(sets[e.first], reach, tol)) return false;
  }
  return true;
}

} // namespace swmpc
