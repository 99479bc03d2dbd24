#include "swmpc/simulation.hpp"

#include "swmpc/lp.hpp"
#include "swmpc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace swmpc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix weight_or_identity(const std::vector<Matrix>& w, int i, int dim) {
  if (i < static_cast<int>(w.size()) && w[i].size() > 0) {
    if (w[i].rows() != dim || w[i].cols() != dim)
      throw DesignError("weight matrix has the wrong shape for subsystem " +
                        std::to_string(i + 1));
    return w[i];
  }
  return Matrix::Identity(dim, dim);
}

double tube_halfwidth(const std::vector<double>& v, int i, double fallback) {
  if (i < static_cast<int>(v.size()) && v[i] > 0.0) return v[i];
  return fallback;
}

// Subsystems whose published reference has at least one potential consumer:
// someone declares a coupling that reads this subsystem's state or input.
std::vector<char> consumer_flags(const NetworkModel& net) {
  const int S = net.num_subsystems();
  std::vector<char> out(S, 0);
  for (int j = 0; j < S; ++j)
    for (const auto& [src, c] : net.subsystems[j].couplings) {
      (void)c;
      if (src != j) out[src] = 1;
    }
  return out;
}

std::vector<int> allowable_sources(const ExperimentSpec& spec, int i) {
  const auto& lists = spec.signal.allowable_neighbors;
  if (i < static_cast<int>(lists.size()) && !lists[i].empty()) return lists[i];
  std::vector<int> out;
  for (const auto& [src, c] : spec.network.subsystems[i].couplings) {
    (void)c;
    out.push_back(src);
  }
  return out;
}

// Scales u toward the origin until it fits inside U. U always contains the
// origin in this code base, so a scale factor in [0, 1] exists.
Vector saturate_into(const Vector& u, const Polytope& U) {
  if (U.contains(u)) return u;
  double lambda = 1.0;
  const Matrix& A = U.normals();
  const Vector& b = U.offsets();
  for (int r = 0; r < A.rows(); ++r) {
    const double au = A.row(r).dot(u);
    if (au > b(r) && au > 0.0) lambda = std::min(lambda, std::max(0.0, b(r) / au));
  }
  return lambda * u;
}

void check_spec(const ExperimentSpec& spec) {
  spec.network.validate();
  spec.signal.graph.validate();
  spec.signal.validate(spec.network.num_modes());
  const int S = spec.network.num_subsystems();
  if (static_cast<int>(spec.x0.size()) != S)
    throw std::invalid_argument("need exactly one initial state per subsystem");
  // A declared allowable list caps which neighbors a topology may activate.
  // Worst-case tube designs sum over that list, so a realized neighbor
  // outside it would see an unmodeled disturbance.
  const auto& allow = spec.signal.allowable_neighbors;
  for (int i = 0; i < S && i < static_cast<int>(allow.size()); ++i) {
    if (allow[i].empty()) continue;
    for (int m = 0; m < spec.network.num_modes(); ++m)
      for (int j : spec.network.topologies[m].neighbors[i])
        if (std::find(allow[i].begin(), allow[i].end(), j) == allow[i].end())
          throw std::invalid_argument(
              "topology " + std::to_string(m + 1) + " activates neighbor " +
              std::to_string(j + 1) + " of subsystem " + std::to_string(i + 1) +
              " outside its allowable set");
  }
  for (int i = 0; i < S; ++i)
    if (spec.x0[i].size() != spec.network.subsystems[i].nx())
      throw std::invalid_argument("initial state dimension mismatch at subsystem " +
                                  std::to_string(i + 1));
  if (spec.steps < 1) throw std::invalid_argument("need at least one step");
  if (spec.params.horizon < 1) throw std::invalid_argument("horizon must be positive");
}

std::vector<LocalArtifacts> design_locals(const ExperimentSpec& spec,
                                          bool decentralized) {
  const NetworkModel& net = spec.network;
  const SwitchingSignal& sig = spec.signal;
  const int S = net.num_subsystems();
  const int M = sig.graph.num_modes;
  const bool per_mode = sig.visibility == Visibility::times_and_modes_known;
  const auto consumed = consumer_flags(net);

  std::vector<LocalArtifacts> art(S);
  std::vector<Polytope> refE(S), refEu(S);
  for (int i = 0; i < S; ++i) {
    const Subsystem& sub = net.subsystems[i];
    LocalArtifacts& a = art[i];
    a.Q = weight_or_identity(spec.params.Q, i, sub.nx());
    const auto& rw = (decentralized && !spec.params.decentralized_R.empty())
                         ? spec.params.decentralized_R
                         : spec.params.R;
    a.R = weight_or_identity(rw, i, sub.nu());
    try {
      a.K = design_feedback_gain(sub.A, sub.B, a.Q, a.R);
      a.P = terminal_weight(sub.A, sub.B, a.K, a.Q, a.R);
    } catch (const std::exception& e) {
      throw DesignError("subsystem " + std::to_string(i + 1) + ": " + e.what());
    }
    a.E = Polytope::centered_box(sub.nx(), tube_halfwidth(spec.params.state_tube, i, 0.1));
    a.Eu = Polytope::centered_box(sub.nu(), tube_halfwidth(spec.params.input_tube, i, 0.05));
    refE[i] = a.E;
    refEu[i] = a.Eu;
  }

  // What the neighbors are assumed to range over when bounding the coupling
  // influence: the reference tubes for the cooperating scheme, the full
  // constraint sets when references are not exchanged.
  std::vector<Polytope> srcX(S), srcU(S);
  const double env = spec.params.neighbor_envelope;
  for (int i = 0; i < S; ++i) {
    srcX[i] = decentralized ? scale(net.subsystems[i].X, env) : refE[i];
    srcU[i] = decentralized ? scale(net.subsystems[i].U, env) : refEu[i];
  }

  for (int i = 0; i < S; ++i) {
    const Subsystem& sub = net.subsystems[i];
    LocalArtifacts& a = art[i];
    a.per_mode = per_mode;
    a.consistency = !decentralized && consumed[i] != 0;
    try {
      if (per_mode) {
        a.sets.resize(M);
        for (int m = 0; m < M; ++m) {
          Polytope W = interaction_disturbance_set(net, i, m, srcX, srcU);
          a.sets[m] = compute_mode_sets(sub, a.K, W, a.E, a.Eu,
                                        spec.params.mrpi_eps, a.consistency);
        }
        std::vector<ModeDynamics> tight(M);
        std::vector<Polytope> term_seeds(M), full_seeds(M);
        for (int m = 0; m < M; ++m) {
          tight[m] = ModeDynamics{sub.A, sub.B, a.sets[m].Xhat, a.sets[m].Uhat};
          term_seeds[m] = a.sets[m].Xf;
          full_seeds[m] = a.sets[m].Xhat;
        }
        auto fam = terminal_switch_sets(tight, sig.graph, term_seeds,
                                        spec.params.max_set_iter, spec.params.set_tol);
        for (int m = 0; m < M; ++m) a.sets[m].T = fam[m];
        auto reach = switch_rci(tight, sig.graph, full_seeds,
                                spec.params.max_set_iter, spec.params.set_tol);
        a.rci = reach.sets;
        // The nominal head may sit anywhere within Z of the measured state,
        // so the admissible-entry domain widens by the tube cross-section.
        const int m0 = sig.mode_at(0);
        a.entry_ok = reach.converged && !reach.any_empty() &&
                     minkowski_sum(pre_k(a.rci[m0], tight[m0], sig.graph.dwell[m0]),
                                   a.sets[m0].Z)
                         .contains(spec.x0[i]);
      } else {
        Polytope W = worst_case_disturbance_set(net, i, allowable_sources(spec, i),
                                                srcX, srcU);
        a.sets.resize(1);
        a.sets[0] = compute_mode_sets(sub, a.K, W, a.E, a.Eu, spec.params.mrpi_eps,
                                      a.consistency);
        a.sets[0].T = a.sets[0].Xf;
        ModeDynamics tight{sub.A, sub.B, a.sets[0].Xhat, a.sets[0].Uhat};
        auto reach = max_control_invariant(tight, spec.params.max_set_iter,
                                           spec.params.set_tol);
        a.rci = {reach.set};
        const int m0 = sig.mode_at(0);
        a.entry_ok = reach.converged && !reach.set.is_empty() &&
                     minkowski_sum(pre_k(reach.set, tight, sig.graph.dwell[m0]),
                                   a.sets[0].Z)
                         .contains(spec.x0[i]);
      }
    } catch (const DesignError& e) {
      throw DesignError("subsystem " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return art;
}

std::string infeasible_detail(const std::string& who, int t,
                              const LocalSolution& sol) {
  std::ostringstream os;
  os << who << " infeasible at t=" << t;
  if (!sol.violated.empty()) {
    os << " (";
    for (size_t k = 0; k < sol.violated.size(); ++k)
      os << (k ? ", " : "") << sol.violated[k];
    os << ")";
  }
  return os.str();
}

// Shared setup for the per-subsystem strategies. Returns false when the
// outcome is already decided.
bool prepare_local(const ExperimentSpec& spec, Strategy strat, RunResult& res) {
  res.strategy = strat;
  try {
    check_spec(spec);
  } catch (const std::exception& e) {
    res.outcome = RunOutcome::design_failed;
    res.detail = e.what();
    return false;
  }
  const auto modes = spec.signal.mode_sequence(spec.steps);
  if (auto chk = validate_signal(modes, spec.signal.graph); !chk.valid) {
    res.outcome = RunOutcome::design_failed;
    res.detail = "switching signal rejected: " + chk.reason + " at t=" +
                 std::to_string(chk.index);
    return false;
  }
  const auto t0 = Clock::now();
  try {
    res.locals = design_locals(spec, strat == Strategy::deswmpc);
  } catch (const DesignError& e) {
    res.outcome = RunOutcome::design_failed;
    res.detail = e.what();
    return false;
  }
  res.design_seconds = seconds_since(t0);
  return true;
}

Matrix block_diag(const std::vector<Matrix>& blocks) {
  int r = 0, c = 0;
  for (const auto& b : blocks) {
    r += static_cast<int>(b.rows());
    c += static_cast<int>(b.cols());
  }
  Matrix out = Matrix::Zero(r, c);
  int ro = 0, co = 0;
  for (const auto& b : blocks) {
    out.block(ro, co, b.rows(), b.cols()) = b;
    ro += static_cast<int>(b.rows());
    co += static_cast<int>(b.cols());
  }
  return out;
}

Polytope product_set(const std::vector<Polytope>& parts) {
  int rows = 0, dim = 0;
  for (const auto& p : parts) {
    rows += p.num_rows();
    dim += p.dim();
  }
  Matrix A = Matrix::Zero(rows, dim);
  Vector b(rows);
  int ro = 0, co = 0;
  for (const auto& p : parts) {
    A.block(ro, co, p.num_rows(), p.dim()) = p.normals();
    b.segment(ro, p.num_rows()) = p.offsets();
    ro += p.num_rows();
    co += p.dim();
  }
  return canonicalize(A, b);
}

// Vertex list by exhaustive active-set enumeration. Meant for the small,
// low-dimensional factors the terminal products are built from.
std::vector<Vector> small_set_vertices(const Polytope& P) {
  const int n = P.dim();
  const int m = P.num_rows();
  std::vector<Vector> verts;
  if (m < n) return verts;
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    Matrix S(n, n);
    Vector rhs(n);
    for (int r = 0; r < n; ++r) {
      S.row(r) = P.normals().row(idx[r]);
      rhs[r] = P.offsets()[idx[r]];
    }
    Eigen::FullPivLU<Matrix> lu(S);
    if (lu.isInvertible()) {
      Vector v = lu.solve(rhs);
      if (P.contains(v, 1e-7)) {
        bool dup = false;
        for (const auto& w : verts)
          if ((w - v).lpNorm<Eigen::Infinity>() < 1e-7) {
            dup = true;
            break;
          }
        if (!dup) verts.push_back(std::move(v));
      }
    }
    int k = n - 1;
    while (k >= 0 && idx[k] == m - n + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int j = k + 1; j < n; ++j) idx[j] = idx[j - 1] + 1;
  }
  return verts;
}

// Can d admissible inputs steer x through X into the target set? Membership
// in the d-step controllable preimage, decided by one feasibility LP instead
// of ever constructing that set.
bool chain_into(const Vector& x, const ModeDynamics& dyn, int d,
                const Polytope& target) {
  if (!dyn.X.contains(x, tol::membership)) return false;
  if (d == 0) return target.contains(x, tol::membership);
  const int n = dyn.nx();
  const int m = dyn.nu();
  std::vector<Matrix> pw(d + 1);
  pw[0] = Matrix::Identity(n, n);
  for (int k = 1; k <= d; ++k) pw[k] = dyn.A * pw[k - 1];
  const int rows_x = dyn.X.num_rows();
  const int rows_u = dyn.U.num_rows();
  const int mr = d * rows_x + d * rows_u + target.num_rows();
  Matrix G = Matrix::Zero(mr, d * m);
  Vector h(mr);
  int ro = 0;
  // Rows N x_k <= off with x_k = A^k x + sum_j A^(k-1-j) B u_j.
  auto add_state_rows = [&](const Matrix& N, const Vector& off, int k) {
    if (N.rows() == 0) return;
    for (int j = 0; j < k; ++j)
      G.block(ro, j * m, N.rows(), m) = N * pw[k - 1 - j] * dyn.B;
    h.segment(ro, N.rows()) = off - N * (pw[k] * x);
    ro += static_cast<int>(N.rows());
  };
  for (int k = 1; k <= d; ++k) add_state_rows(dyn.X.normals(), dyn.X.offsets(), k);
  add_state_rows(target.normals(), target.offsets(), d);
  for (int j = 0; j < d; ++j) {
    G.block(ro, j * m, rows_u, m) = dyn.U.normals();
    h.segment(ro, rows_u) = dyn.U.offsets();
    ro += rows_u;
  }
  h.array() += tol::membership;
  LpResult lp = solve_lp(G, h, Vector::Zero(d * m));
  return lp.status == LpStatus::optimal;
}

// Certifies the mode-independent terminal product against every stacked
// mode, one subsystem at a time: the factor must sit inside the subsystem's
// constraints and absorb any one-step coupling its neighbors can produce
// while landing back in itself. Factor and coupling sets are low dimensional,
// so their vertices enumerate cheaply, and convexity makes the vertex-pair
// check exact. One-step invariance under every mode implies every dwell
// chain the switch graph can demand, so no projection is ever formed.
bool central_family_ok(const NetworkModel& net, const std::vector<Polytope>& C,
                       std::string* why) {
  const int S = net.num_subsystems();
  const int M = net.num_modes();
  for (int i = 0; i < S; ++i) {
    if (C[i].is_empty() || !C[i].contains(Vector::Zero(C[i].dim()), 1e-7)) {
      *why = "terminal factor for subsystem " + std::to_string(i + 1) +
             " lost the origin";
      return false;
    }
    if (!is_subset(C[i], net.subsystems[i].X, tol::set_equality)) {
      *why = "terminal factor for subsystem " + std::to_string(i + 1) +
             " leaves its state constraints";
      return false;
    }
  }
  for (int md = 0; md < M; ++md) {
    for (int i = 0; i < S; ++i) {
      const Subsystem& sub = net.subsystems[i];
      Polytope D = Polytope::singleton(Vector::Zero(sub.nx()));
      for (int j : net.topologies[md].neighbors[i]) {
        const Coupling& c = sub.couplings.at(j);
        if (c.A.size() > 0) D = minkowski_sum(D, affine_image(C[j], c.A));
        if (c.B.size() > 0)
          D = minkowski_sum(D, affine_image(net.subsystems[j].U, c.B));
      }
      const auto vc = small_set_vertices(C[i]);
      const auto vd = small_set_vertices(D);
      if (vc.empty() || vd.empty()) {
        *why = "terminal factor for subsystem " + std::to_string(i + 1) +
               " has no vertices to certify";
        return false;
      }
      const int total = static_cast<int>(vc.size() * vd.size());
      std::atomic<bool> ok{true};
      parallel_for(total, [&](int k) {
        if (!ok.load(std::memory_order_relaxed)) return;
        const Vector& v = vc[k / vd.size()];
        const Vector& w = vd[k % vd.size()];
        // One admissible input must land A v + B u + w back in the factor.
        const int nu = sub.nu();
        const int rows_c = C[i].num_rows();
        const int rows_u = sub.U.num_rows();
        Matrix G(rows_c + rows_u, nu);
        Vector h(rows_c + rows_u);
        G.topRows(rows_c) = C[i].normals() * sub.B;
        h.head(rows_c) =
            C[i].offsets() - C[i].normals() * (sub.A * v + w);
        G.bottomRows(rows_u) = sub.U.normals();
        h.tail(rows_u) = sub.U.offsets();
        h.array() += tol::membership;
        bool good = false;
        try {
          good = solve_lp(G, h, Vector::Zero(nu)).status == LpStatus::optimal;
        } catch (const std::runtime_error&) {
        }
        if (!good) ok.store(false, std::memory_order_relaxed);
      });
      if (!ok.load()) {
        *why = "subsystem " + std::to_string(i + 1) +
               " terminal factor is not invariant under mode " +
               std::to_string(md + 1) + " couplings";
        return false;
      }
    }
  }
  return true;
}

bool prepare_central(const ExperimentSpec& spec, RunResult& res) {
  res.strategy = Strategy::cswmpc;
  if (spec.signal.visibility != Visibility::times_and_modes_known) {
    res.outcome = RunOutcome::refused;
    res.detail = "central scheme needs the full switching schedule in advance; "
                 "this signal does not disclose it";
    return false;
  }
  try {
    check_spec(spec);
  } catch (const std::exception& e) {
    res.outcome = RunOutcome::design_failed;
    res.detail = e.what();
    return false;
  }
  const auto modes = spec.signal.mode_sequence(spec.steps);
  if (auto chk = validate_signal(modes, spec.signal.graph); !chk.valid) {
    res.outcome = RunOutcome::design_failed;
    res.detail = "switching signal rejected: " + chk.reason + " at t=" +
                 std::to_string(chk.index);
    return false;
  }

  const NetworkModel& net = spec.network;
  const int S = net.num_subsystems();
  const int M = net.num_modes();
  const auto t0 = Clock::now();

  // The same per-subsystem tube designs the cooperating scheme runs; the
  // central terminal family is assembled from their artifacts below.
  std::vector<LocalArtifacts> locals;
  try {
    locals = design_locals(spec, false);
  } catch (const DesignError& e) {
    res.outcome = RunOutcome::design_failed;
    res.detail = e.what();
    return false;
  }

  CentralArtifacts central;
  std::vector<Matrix> Pi(S), Bi(S);
  std::vector<int> xoff(S + 1, 0), uoff(S + 1, 0);
  for (int i = 0; i < S; ++i) {
    const Subsystem& sub = net.subsystems[i];
    central.K.push_back(locals[i].K);
    Pi[i] = locals[i].P;
    Bi[i] = sub.B;
    xoff[i + 1] = xoff[i] + sub.nx();
    uoff[i + 1] = uoff[i] + sub.nu();
  }
  const int n = xoff[S];

  std::vector<Polytope> Xi(S), Ui(S);
  for (int i = 0; i < S; ++i) {
    Xi[i] = net.subsystems[i].X;
    Ui[i] = net.subsystems[i].U;
  }
  const Polytope Xg = product_set(Xi);
  const Polytope Ug = product_set(Ui);

  central.global_modes.resize(M);
  for (int md = 0; md < M; ++md) {
    Matrix Ag = Matrix::Zero(n, n);
    Matrix Bg = block_diag(Bi);
    for (int i = 0; i < S; ++i) {
      const Subsystem& sub = net.subsystems[i];
      Ag.block(xoff[i], xoff[i], sub.nx(), sub.nx()) = sub.A;
      for (int j : net.topologies[md].neighbors[i]) {
        const Coupling& c = sub.couplings.at(j);
        if (c.A.size() > 0) Ag.block(xoff[i], xoff[j], c.A.rows(), c.A.cols()) = c.A;
        if (c.B.size() > 0) Bg.block(xoff[i], uoff[j], c.B.rows(), c.B.cols()) = c.B;
      }
    }
    central.global_modes[md] = ModeDynamics{Ag, Bg, Xg, Ug};
  }

  // Terminal family: a mode-independent product of per-subsystem sets. Each
  // factor pairs a tube sized for the worst coupling over all modes with the
  // invariant core of the correspondingly tightened (and, for broadcast
  // sources, envelope-constrained) sets. One set per subsystem serves every
  // mode because the subsystem dynamics never change, only the couplings do,
  // and the tube already absorbs their union. The maximal per-mode family
  // over the stacked system is out of reach at this scale: its intermediate
  // projections grow into thousands of facets.
  std::vector<Polytope> factors(S);
  try {
    for (int i = 0; i < S; ++i) {
      const Subsystem& sub = net.subsystems[i];
      const LocalArtifacts& a = locals[i];
      std::vector<int> nbrs;
      for (int m = 0; m < M; ++m)
        for (int j : net.topologies[m].neighbors[i])
          if (std::find(nbrs.begin(), nbrs.end(), j) == nbrs.end())
            nbrs.push_back(j);
      Polytope Wall = Polytope::singleton(Vector::Zero(sub.nx()));
      for (int j : nbrs) {
        const Coupling& c = sub.couplings.at(j);
        if (c.A.size() > 0)
          Wall = minkowski_sum(Wall, affine_image(locals[j].E, c.A));
        if (c.B.size() > 0)
          Wall = minkowski_sum(Wall, affine_image(locals[j].Eu, c.B));
      }
      ModeSets ms = compute_mode_sets(sub, a.K, Wall, a.E, a.Eu,
                                      spec.params.mrpi_eps, a.consistency);
      Polytope core = ms.Xf;
      if (a.consistency) {
        const Matrix F = sub.A + sub.B * a.K;
        core = terminal_region_seed(F, intersect(ms.Xhat, ms.dE),
                                    intersect(ms.Uhat, ms.dU), a.K);
        if (core.is_empty())
          throw DesignError("subsystem " + std::to_string(i + 1) +
                            ": envelope-constrained terminal core is empty");
      }
      factors[i] = minkowski_sum(core, ms.Z);
    }
  } catch (const DesignError& e) {
    res.outcome = RunOutcome::design_failed;
    res.detail = e.what();
    return false;
  }

  std::string why;
  if (!central_family_ok(net, factors, &why)) {
    res.outcome = RunOutcome::design_failed;
    res.detail = "stacked terminal family certificate failed: " + why;
    return false;
  }
  central.T.assign(M, product_set(factors));

  central.P = block_diag(Pi);
  {
    Vector x0g(n);
    for (int i = 0; i < S; ++i) x0g.segment(xoff[i], spec.x0[i].size()) = spec.x0[i];
    const int m0 = modes[0];
    central.entry_ok = chain_into(x0g, central.global_modes[m0],
                                  spec.signal.graph.dwell[m0], central.T[m0]);
  }
  res.central = std::move(central);
  res.design_seconds = seconds_since(t0);
  return true;
}

RunResult run_local(const ExperimentSpec& spec, Strategy strat) {
  RunResult res;
  if (!prepare_local(spec, strat, res)) return res;

  const NetworkModel& net = spec.network;
  const int S = net.num_subsystems();
  const int N = spec.params.horizon;
  const bool exchange = strat == Strategy::dswmpc;
  const auto modes = spec.signal.mode_sequence(spec.steps);

  SimulationTrace& trace = res.trace;
  for (int i = 0; i < S; ++i) {
    trace.nx.push_back(net.subsystems[i].nx());
    trace.nu.push_back(net.subsystems[i].nu());
  }

  std::vector<Vector> x = spec.x0;
  std::vector<std::optional<ReferenceTrajectory>> ref(S);
  DwellState ds{modes[0], spec.signal.graph.dwell[modes[0]]};

  for (int t = 0; t < spec.steps; ++t) {
    if (t > 0) ds = remaining_dwell_update(ds, modes[t], spec.signal.graph);
    const int mode = modes[t];

    std::vector<std::vector<Vector>> inject(S);
    if (exchange) {
      const auto& nbrs = net.topologies[mode].neighbors;
      for (int i = 0; i < S; ++i) {
        bool any = false;
        for (int j : nbrs[i])
          if (ref[j]) any = true;
        if (!any) continue;
        inject[i].assign(N, Vector::Zero(net.subsystems[i].nx()));
        for (int j : nbrs[i]) {
          if (!ref[j]) continue;
          const Coupling& c = net.subsystems[i].couplings.at(j);
          for (int k = 0; k < N; ++k) {
            if (c.A.size() > 0) inject[i][k] += c.A * ref[j]->x[k];
            if (c.B.size() > 0) inject[i][k] += c.B * ref[j]->u[k];
          }
        }
      }
    }

    std::vector<LocalSolution> sol(S);
    std::vector<double> ms(S, 0.0);
    parallel_for(S, [&](int i) {
      const Subsystem& sub = net.subsystems[i];
      const LocalArtifacts& a = res.locals[i];
      const ModeSets& sets = a.sets[a.per_mode ? mode : 0];
      LocalOcp ocp;
      ocp.A = sub.A;
      ocp.B = sub.B;
      ocp.K = a.K;
      ocp.Q = a.Q;
      ocp.R = a.R;
      ocp.P = a.P;
      ocp.N = N;
      ocp.delta = ds.remaining;
      ocp.Z = sets.Z;
      ocp.Xhat = sets.Xhat;
      ocp.Uhat = sets.Uhat;
      ocp.T = sets.T;
      ocp.dE = sets.dE;
      ocp.dU = sets.dU;
      ocp.x = x[i];
      ocp.injection = inject[i];
      if (exchange && a.consistency && t > 0 && ref[i]) ocp.own_ref = &*ref[i];
      const auto t0 = Clock::now();
      sol[i] = solve_local_ocp(ocp);
      ms[i] = seconds_since(t0) * 1e3;
    });

    Step step;
    step.t = t;
    step.mode = mode;
    step.delta = ds.remaining;
    step.subs.resize(S);
    std::vector<Vector> u(S);
    for (int i = 0; i < S; ++i) {
      const LocalArtifacts& a = res.locals[i];
      SubsystemStep& rec = step.subs[i];
      rec.x = x[i];
      rec.feasible = sol[i].feasible;
      rec.solve_ms = ms[i];
      if (ref[i]) rec.x_ref = ref[i]->x[0];
      if (sol[i].feasible) {
        u[i] = control_input(x[i], sol[i].xhat[0], sol[i].uhat[0], a.K);
        rec.xhat = sol[i].xhat[0];
        rec.xhat_terminal = sol[i].xhat[N];
        rec.cost = sol[i].cost;
      } else {
        Vector fb;
        if (ref[i])
          fb = ref[i]->u[0] + a.K * (x[i] - ref[i]->x[0]);
        else
          fb = a.K * x[i];
        u[i] = saturate_into(fb, net.subsystems[i].U);
        rec.cost = std::numeric_limits<double>::quiet_NaN();
        if (trace.first_infeasible_t < 0) {
          trace.first_infeasible_t = t;
          res.detail =
              infeasible_detail("subsystem " + std::to_string(i + 1), t, sol[i]);
        }
      }
      rec.u = u[i];
    }
    trace.steps.push_back(std::move(step));

    x = plant_step(net, mode, x, u);
    for (int i = 0; i < S; ++i) {
      const Subsystem& sub = net.subsystems[i];
      const LocalArtifacts& a = res.locals[i];
      if (sol[i].feasible) {
        ReferenceTrajectory next{sol[i].xhat, sol[i].uhat};
        ref[i] = shift_reference(next, sub.A, sub.B, a.K);
      } else if (ref[i]) {
        ref[i] = shift_reference(*ref[i], sub.A, sub.B, a.K);
      }
    }
  }

  ds = remaining_dwell_update(ds, modes[spec.steps], spec.signal.graph);
  Step last;
  last.t = spec.steps;
  last.mode = modes[spec.steps];
  last.delta = ds.remaining;
  last.subs.resize(S);
  for (int i = 0; i < S; ++i) {
    last.subs[i].x = x[i];
    last.subs[i].cost = std::numeric_limits<double>::quiet_NaN();
  }
  trace.steps.push_back(std::move(last));

  res.sse = sse_report(trace);
  res.outcome = trace.any_infeasible() ? RunOutcome::runtime_infeasible : RunOutcome::ok;
  return res;
}

} // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::dswmpc: return "dswmpc";
    case Strategy::cswmpc: return "cswmpc";
    case Strategy::deswmpc: return "deswmpc";
  }
  return "?";
}

std::string to_string(RunOutcome o) {
  switch (o) {
    case RunOutcome::ok: return "ok";
    case RunOutcome::refused: return "refused";
    case RunOutcome::design_failed: return "design_failed";
    case RunOutcome::runtime_infeasible: return "runtime_infeasible";
  }
  return "?";
}

RunResult run_dswmpc(const ExperimentSpec& spec) {
  return run_local(spec, Strategy::dswmpc);
}

RunResult run_deswmpc(const ExperimentSpec& spec) {
  return run_local(spec, Strategy::deswmpc);
}

RunResult run_cswmpc(const ExperimentSpec& spec) {
  RunResult res;
  if (!prepare_central(spec, res)) return res;
  const CentralArtifacts& central = *res.central;

  const NetworkModel& net = spec.network;
  const int S = net.num_subsystems();
  const int N = spec.params.horizon;
  const auto modes = spec.signal.mode_sequence(spec.steps);

  std::vector<Matrix> Qi(S), Ri(S);
  std::vector<int> xoff(S + 1, 0), uoff(S + 1, 0);
  for (int i = 0; i < S; ++i) {
    Qi[i] = weight_or_identity(spec.params.Q, i, net.subsystems[i].nx());
    Ri[i] = weight_or_identity(spec.params.R, i, net.subsystems[i].nu());
    xoff[i + 1] = xoff[i] + net.subsystems[i].nx();
    uoff[i + 1] = uoff[i] + net.subsystems[i].nu();
  }
  const int n = xoff[S];
  const int m = uoff[S];
  const Matrix Qg = block_diag(Qi);
  const Matrix Rg = block_diag(Ri);
  const Matrix K0 = Matrix::Zero(m, n);
  const Polytope Xg = central.global_modes[0].X;
  const Polytope Ug = central.global_modes[0].U;

  SimulationTrace& trace = res.trace;
  for (int i = 0; i < S; ++i) {
    trace.nx.push_back(net.subsystems[i].nx());
    trace.nu.push_back(net.subsystems[i].nu());
  }

  std::vector<Vector> x = spec.x0;
  DwellState ds{modes[0], spec.signal.graph.dwell[modes[0]]};
  for (int t = 0; t < spec.steps; ++t) {
    if (t > 0) ds = remaining_dwell_update(ds, modes[t], spec.signal.graph);
    const int mode = modes[t];

    Vector xg(n);
    for (int i = 0; i < S; ++i) xg.segment(xoff[i], x[i].size()) = x[i];

    LocalOcp ocp;
    ocp.A = central.global_modes[mode].A;
    ocp.B = central.global_modes[mode].B;
    ocp.K = K0;
    ocp.Q = Qg;
    ocp.R = Rg;
    ocp.P = central.P;
    ocp.N = N;
    ocp.delta = ds.remaining;
    ocp.Z = Polytope::singleton(Vector::Zero(n));
    ocp.Xhat = Xg;
    ocp.Uhat = Ug;
    ocp.T = central.T[mode];
    ocp.x = xg;

    const auto t0 = Clock::now();
    LocalSolution sol = solve_local_ocp(ocp);
    const double ms = seconds_since(t0) * 1e3;

    Step step;
    step.t = t;
    step.mode = mode;
    step.delta = ds.remaining;
    step.subs.resize(S);
    std::vector<Vector> u(S);
    for (int i = 0; i < S; ++i) {
      SubsystemStep& rec = step.subs[i];
      rec.x = x[i];
      rec.feasible = sol.feasible;
      rec.solve_ms = ms;
      if (sol.feasible) {
        u[i] = sol.uhat[0].segment(uoff[i], net.subsystems[i].nu());
        rec.xhat = sol.xhat[0].segment(xoff[i], net.subsystems[i].nx());
        rec.xhat_terminal = sol.xhat[N].segment(xoff[i], net.subsystems[i].nx());
        rec.cost = sol.cost;
      } else {
        u[i] = saturate_into(central.K[i] * x[i], net.subsystems[i].U);
        rec.cost = std::numeric_limits<double>::quiet_NaN();
      }
      rec.u = u[i];
    }
    if (!sol.feasible && trace.first_infeasible_t < 0) {
      trace.first_infeasible_t = t;
      res.detail = infeasible_detail("central problem", t, sol);
    }
    trace.steps.push_back(std::move(step));
    x = plant_step(net, mode, x, u);
  }

  ds = remaining_dwell_update(ds, modes[spec.steps], spec.signal.graph);
  Step last;
  last.t = spec.steps;
  last.mode = modes[spec.steps];
  last.delta = ds.remaining;
  last.subs.resize(S);
  for (int i = 0; i < S; ++i) {
    last.subs[i].x = x[i];
    last.subs[i].cost = std::numeric_limits<double>::quiet_NaN();
  }
  trace.steps.push_back(std::move(last));

  res.sse = sse_report(trace);
  res.outcome = trace.any_infeasible() ? RunOutcome::runtime_infeasible : RunOutcome::ok;
  return res;
}

RunResult run_strategy(const ExperimentSpec& spec, Strategy s) {
  switch (s) {
    case Strategy::dswmpc: return run_dswmpc(spec);
    case Strategy::cswmpc: return run_cswmpc(spec);
    case Strategy::deswmpc: return run_deswmpc(spec);
  }
  throw std::invalid_argument("unknown strategy");
}

RunResult design_strategy(const ExperimentSpec& spec, Strategy s) {
  RunResult res;
  if (s == Strategy::cswmpc) {
    if (prepare_central(spec, res)) res.outcome = RunOutcome::ok;
  } else {
    if (prepare_local(spec, s, res)) res.outcome = RunOutcome::ok;
  }
  return res;
}

SseReport sse_report(const SimulationTrace& trace) {
  SseReport rep;
  const int S = static_cast<int>(trace.nx.size());
  rep.per_state.resize(S);
  rep.per_subsystem.assign(S, 0.0);
  for (int i = 0; i < S; ++i) rep.per_state[i] = Vector::Zero(trace.nx[i]);
  for (const Step& st : trace.steps)
    for (int i = 0; i < S; ++i)
      rep.per_state[i] += st.subs[i].x.cwiseAbs2();
  for (int i = 0; i < S; ++i) {
    rep.per_subsystem[i] = rep.per_state[i].sum();
    rep.total += rep.per_subsystem[i];
  }
  return rep;
}

AuditReport audit_trace(const RunResult& run, const ExperimentSpec& spec) {
  AuditReport rep;
  const double tol = tol::ocp_constraint;
  auto violation = [](const Polytope& P, const Vector& v) {
    if (P.is_empty()) return std::numeric_limits<double>::infinity();
    if (P.num_rows() == 0) return 0.0;
    return std::max(0.0, (P.normals() * v - P.offsets()).maxCoeff());
  };
  auto flag = [&](int t, int i, const std::string& check, double mag) {
    rep.ok = false;
    rep.issues.push_back({t, i, check, mag});
  };

  const NetworkModel& net = spec.network;
  const int S = net.num_subsystems();
  const int N = spec.params.horizon;
  const SimulationTrace& tr = run.trace;
  if (tr.steps.empty()) {
    flag(-1, -1, "empty_trace", 0.0);
    return rep;
  }

  // Mode sequence and dwell bookkeeping against the declared signal.
  std::vector<int> recorded;
  for (const Step& st : tr.steps) recorded.push_back(st.mode);
  if (auto chk = validate_signal(recorded, spec.signal.graph); !chk.valid)
    flag(chk.index, -1, "signal_" + chk.reason, 0.0);
  DwellState ds{recorded[0], spec.signal.graph.dwell[recorded[0]]};
  for (size_t k = 0; k < tr.steps.size(); ++k) {
    if (k > 0) ds = remaining_dwell_update(ds, recorded[k], spec.signal.graph);
    if (tr.steps[k].mode != spec.signal.mode_at(tr.steps[k].t))
      flag(tr.steps[k].t, -1, "mode_mismatch", 0.0);
    if (tr.steps[k].delta != ds.remaining)
      flag(tr.steps[k].t, -1, "dwell_mismatch",
           std::abs(tr.steps[k].delta - ds.remaining));
  }

  for (const Step& st : tr.steps) {
    const bool final_row = st.t == spec.steps;
    Vector xtg;
    bool have_global_plan = run.central.has_value() && !final_row;
    if (run.central) {
      int n = 0;
      for (int i = 0; i < S; ++i) n += net.subsystems[i].nx();
      xtg = Vector::Zero(n);
    }
    int off = 0;
    for (int i = 0; i < S; ++i) {
      const SubsystemStep& rec = st.subs[i];
      if (double v = violation(net.subsystems[i].X, rec.x); v > tol)
        flag(st.t, i, "state_bounds", v);
      if (final_row) continue;
      if (double v = violation(net.subsystems[i].U, rec.u); v > tol)
        flag(st.t, i, "input_bounds", v);

      if (run.central) {
        if (rec.xhat_terminal.size() > 0)
          xtg.segment(off, rec.xhat_terminal.size()) = rec.xhat_terminal;
        else
          have_global_plan = false;
        off += net.subsystems[i].nx();
        continue;
      }

      const LocalArtifacts& a = run.locals[i];
      const ModeSets& sets = a.sets[a.per_mode ? st.mode : 0];
      if (rec.xhat.size() > 0) {
        if (double v = violation(sets.Z, rec.x - rec.xhat); v > tol)
          flag(st.t, i, "tube", v);
      }
      if (run.strategy == Strategy::dswmpc && a.consistency && rec.x_ref.size() > 0) {
        if (double v = violation(a.E, rec.x - rec.x_ref); v > tol)
          flag(st.t, i, "reference_fidelity", v);
      }
      if (rec.xhat_terminal.size() > 0 && st.delta <= N) {
        if (double v = violation(sets.T, rec.xhat_terminal); v > tol)
          flag(st.t, i, "terminal", v);
      }
    }
    if (run.central && have_global_plan && st.delta <= N) {
      if (double v = violation(run.central->T[st.mode], xtg); v > tol)
        flag(st.t, -1, "terminal", v);
    }
  }
  return rep;
}

} // namespace swmpc
