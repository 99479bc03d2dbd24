#include "swmpc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace swmpc {

Matrix design_feedback_gain(const Matrix& A, const Matrix& B,
                            const Matrix& Q, const Matrix& R) {
  RiccatiResult rr = solve_discrete_riccati(A, B, Q, R);
  if (!rr.converged) throw DesignError("feedback gain: Riccati iteration did not converge");
  Matrix F = A + B * rr.K;
  if (!is_schur(F, tol::schur_margin))
    throw DesignError("feedback gain: closed loop not Schur stable");
  return rr.K;
}

Matrix terminal_weight(const Matrix& A, const Matrix& B, const Matrix& K,
                       const Matrix& Q, const Matrix& R) {
  Matrix F = A + B * K;
  if (!is_schur(F, tol::schur_margin))
    throw DesignError("terminal weight: closed loop not Schur stable");
  Matrix S = Q + K.transpose() * R * K;
  return solve_discrete_lyapunov(F, 0.5 * (S + S.transpose()));
}

ModeSets compute_mode_sets(const Subsystem& sub, const Matrix& K,
                           const Polytope& W, const Polytope& E,
                           const Polytope& Eu, double mrpi_eps,
                           bool require_consistency) {
  const int n = sub.nx();
  Matrix F = sub.A + sub.B * K;

  ModeSets out;
  out.W = W;
  out.Z = mrpi_approx(F, W, mrpi_eps);
  Polytope KZ = affine_image(out.Z, K);

  if (!is_subset(minkowski_sum(affine_image(out.Z, F), W), out.Z, tol::rpi_certificate))
    throw DesignError("mode sets: tube invariance certificate failed");

  out.Xhat = pontryagin_diff(sub.X, out.Z);
  out.Uhat = pontryagin_diff(sub.U, KZ);
  if (out.Xhat.is_empty()) throw DesignError("mode sets: tightened state set empty");
  if (out.Uhat.is_empty()) throw DesignError("mode sets: tightened input set empty");

  out.dE = pontryagin_diff(E, out.Z);
  out.dU = pontryagin_diff(Eu, KZ);
  if (require_consistency) {
    if (out.dE.is_empty())
      throw DesignError("mode sets: state deviation budget empty (tube exceeds reference budget)");
    if (out.dU.is_empty())
      throw DesignError("mode sets: input deviation budget empty (tube exceeds reference budget)");
    if (!is_subset(minkowski_sum(out.dE, out.Z), E, tol::rpi_certificate))
      throw DesignError("mode sets: state deviation certificate failed");
    if (!is_subset(minkowski_sum(out.dU, KZ), Eu, tol::rpi_certificate))
      throw DesignError("mode sets: input deviation certificate failed");
  }

  out.Xf = terminal_region_seed(F, out.Xhat, out.Uhat, K);
  if (out.Xf.is_empty()) throw DesignError("mode sets: invariant terminal seed empty");
  if (!out.Xf.contains(Vector::Zero(n), 1e-7))
    throw DesignError("mode sets: terminal seed does not contain the origin");
  return out;
}

Polytope terminal_region_seed(const Matrix& F, const Polytope& Xhat,
                              const Polytope& Uhat, const Matrix& K,
                              int max_iter, double tol) {
  Polytope omega = intersect(Xhat, affine_preimage(Uhat, K));
  for (int it = 0; it < max_iter; ++it) {
    if (omega.is_empty()) return omega;
    Polytope next = intersect(omega, affine_preimage(omega, F));
    if (is_subset(omega, next, tol) && is_subset(next, omega, tol)) return next;
    omega = std::move(next);
  }
  throw DesignError("terminal seed: no convergence within iteration budget");
}

std::vector<Polytope> terminal_switch_sets(const std::vector<ModeDynamics>& tight,
                                           const SwitchGraph& graph,
                                           const std::vector<Polytope>& seeds,
                                           int max_iter, double tol) {
  SwitchRciResult r = switch_rci(tight, graph, seeds, max_iter, tol);
  if (!r.converged)
    throw DesignError("terminal sets: fixed point did not converge");
  if (r.any_empty())
    throw DesignError("terminal sets: family has an empty member");
  return r.sets;
}

ReferenceTrajectory zero_reference(int nx, int nu, int N) {
  ReferenceTrajectory ref;
  ref.x.assign(N + 1, Vector::Zero(nx));
  ref.u.assign(N, Vector::Zero(nu));
  return ref;
}

ReferenceTrajectory shift_reference(const ReferenceTrajectory& ref, const Matrix& A,
                                    const Matrix& B, const Matrix& K) {
  const int N = static_cast<int>(ref.u.size());
  if (static_cast<int>(ref.x.size()) != N + 1)
    throw std::invalid_argument("shift_reference: malformed reference");
  ReferenceTrajectory out;
  out.x.assign(ref.x.begin() + 1, ref.x.end());
  out.u.assign(ref.u.begin() + 1, ref.u.end());
  Vector xN = ref.x.back();
  Vector uN = K * xN;
  out.u.push_back(uN);
  out.x.push_back(A * xN + B * uN);
  return out;
}

namespace {

struct RowBlock {
  Matrix A;
  Vector b;
  std::string family;
};

} // namespace

LocalSolution solve_local_ocp(const LocalOcp& ocp) {
  const int n = static_cast<int>(ocp.A.rows());
  const int m = static_cast<int>(ocp.B.cols());
  const int N = ocp.N;
  if (N < 1) throw std::invalid_argument("solve_local_ocp: horizon must be >= 1");
  if (ocp.x.size() != n) throw std::invalid_argument("solve_local_ocp: state dimension mismatch");
  if (!ocp.injection.empty() && static_cast<int>(ocp.injection.size()) != N)
    throw std::invalid_argument("solve_local_ocp: injection length mismatch");
  if (ocp.own_ref &&
      (static_cast<int>(ocp.own_ref->x.size()) != N + 1 ||
       static_cast<int>(ocp.own_ref->u.size()) != N))
    throw std::invalid_argument("solve_local_ocp: reference length mismatch");

  LocalSolution early;
  auto reject = [&](const char* family) {
    early.feasible = false;
    early.violated.push_back(family);
    return early;
  };
  if (ocp.Z.is_empty()) return reject("initial_tube");
  if (ocp.Xhat.is_empty()) return reject("state_bounds");
  if (ocp.Uhat.is_empty()) return reject("input_bounds");
  if (ocp.T.is_empty() && ocp.delta <= N) return reject("terminal");
  if (ocp.own_ref) {
    if (ocp.dE.is_empty()) return reject("reference_state");
    if (ocp.dU.is_empty()) return reject("reference_input");
  }

  // The nominal initial state is a decision variable unless the tube is a
  // single point, in which case it is pinned to the measurement directly.
  const bool pinned = ocp.Z.is_singleton();
  Vector z_center = Vector::Zero(n);
  if (pinned) z_center = ocp.Z.chebyshev_center();
  const int nvar = (pinned ? 0 : n) + N * m;

  auto u_index = [&](int k) { return (pinned ? 0 : n) + k * m; };
  auto inj = [&](int k) -> Vector {
    return ocp.injection.empty() ? Vector::Zero(n) : ocp.injection[k];
  };

  // x(k) = G_k xi + g_k.
  std::vector<Matrix> G(N + 1);
  std::vector<Vector> g(N + 1);
  G[0] = Matrix::Zero(n, nvar);
  if (pinned) {
    g[0] = ocp.x - z_center;
  } else {
    G[0].leftCols(n).setIdentity();
    g[0] = Vector::Zero(n);
  }
  for (int k = 0; k < N; ++k) {
    G[k + 1] = ocp.A * G[k];
    G[k + 1].middleCols(u_index(k), m) += ocp.B;
    g[k + 1] = ocp.A * g[k] + inj(k);
  }

  Matrix H = Matrix::Zero(nvar, nvar);
  Vector f = Vector::Zero(nvar);
  for (int k = 0; k < N; ++k) {
    H += 2.0 * G[k].transpose() * ocp.Q * G[k];
    f += 2.0 * G[k].transpose() * ocp.Q * g[k];
    H.block(u_index(k), u_index(k), m, m) += 2.0 * ocp.R;
  }
  H += 2.0 * G[N].transpose() * ocp.P * G[N];
  f += 2.0 * G[N].transpose() * ocp.P * g[N];
  H = 0.5 * (H + H.transpose());

  std::vector<RowBlock> blocks;
  auto add_set_rows = [&](const Polytope& S, const Matrix& map, const Vector& off,
                          const std::string& family) {
    if (S.is_whole_space() || S.num_rows() == 0) return;
    RowBlock rb;
    rb.A = S.normals() * map;
    rb.b = S.offsets() - S.normals() * off;
    rb.family = family;
    blocks.push_back(std::move(rb));
  };

  if (!pinned) {
    // x - x(0) in Z.
    Matrix map = -G[0];
    Vector off = ocp.x - g[0];
    add_set_rows(ocp.Z, map, off, "initial_tube");
  }
  for (int k = 0; k < N; ++k) {
    add_set_rows(ocp.Xhat, G[k], g[k], "state_bounds");
    Matrix Um = Matrix::Zero(m, nvar);
    Um.middleCols(u_index(k), m).setIdentity();
    add_set_rows(ocp.Uhat, Um, Vector::Zero(m), "input_bounds");
    if (ocp.own_ref) {
      add_set_rows(ocp.dE, G[k], g[k] - ocp.own_ref->x[k], "reference_state");
      add_set_rows(ocp.dU, Um, -ocp.own_ref->u[k], "reference_input");
    }
  }
  for (int k = std::max(ocp.delta, 0); k <= N; ++k)
    add_set_rows(ocp.T, G[k], g[k], "terminal");

  int rows = 0;
  for (const auto& rb : blocks) rows += static_cast<int>(rb.A.rows());
  Matrix Aq(rows, nvar);
  Vector bq(rows);
  std::vector<const std::string*> row_family(rows);
  {
    int at = 0;
    for (const auto& rb : blocks) {
      Aq.middleRows(at, rb.A.rows()) = rb.A;
      bq.segment(at, rb.A.rows()) = rb.b;
      for (int i = 0; i < rb.A.rows(); ++i) row_family[at + i] = &rb.family;
      at += static_cast<int>(rb.A.rows());
    }
  }

  QpResult qp = solve_qp(H, f, Aq, bq);
  LocalSolution sol;
  sol.qp_iterations = qp.iterations;
  sol.kkt_residual = qp.kkt_residual;

  if (qp.status != QpStatus::optimal) {
    // Name the families still violated at the least-infeasible point.
    if (qp.x.size() == nvar && rows > 0) {
      Vector resid = Aq * qp.x - bq;
      std::map<std::string, double> worst;
      for (int i = 0; i < rows; ++i)
        if (resid[i] > 1e-8)
          worst[*row_family[i]] = std::max(worst[*row_family[i]], resid[i]);
      for (const auto& [fam, v] : worst) {
        sol.violated.push_back(fam);
        sol.max_violation = std::max(sol.max_violation, v);
      }
    }
    if (sol.violated.empty()) sol.violated.push_back("unknown");
    return sol;
  }

  sol.feasible = true;
  sol.xhat.resize(N + 1);
  sol.uhat.resize(N);
  for (int k = 0; k <= N; ++k) sol.xhat[k] = G[k] * qp.x + g[k];
  for (int k = 0; k < N; ++k) sol.uhat[k] = qp.x.segment(u_index(k), m);
  double cost = 0.0;
  for (int k = 0; k < N; ++k) {
    cost += sol.xhat[k].dot(ocp.Q * sol.xhat[k]);
    cost += sol.uhat[k].dot(ocp.R * sol.uhat[k]);
  }
  cost += sol.xhat[N].dot(ocp.P * sol.xhat[N]);
  sol.cost = cost;
  if (rows > 0) sol.max_violation = std::max(0.0, (Aq * qp.x - bq).maxCoeff());
  return sol;
}

Vector control_input(const Vector& x, const Vector& xhat0, const Vector& uhat0,
                     const Matrix& K) {
  return uhat0 + K * (x - xhat0);
}

} // namespace swmpc
