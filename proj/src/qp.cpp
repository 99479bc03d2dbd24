#include "swmpc/qp.hpp"

#include "swmpc/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace swmpc {

namespace {

constexpr double kActTol = 1e-9;
constexpr double kDirTol = 1e-11;
constexpr double kMultTol = 1e-9;

// Finds a point with A x <= b, C x = d by minimizing the worst violation.
// Returns the point and the achieved violation level.
struct Phase1 {
  bool ok = false;
  Vector x;
  double violation = 0.0;
};

Phase1 lp_phase1(const Matrix& A, const Vector& b, const Matrix& C, const Vector& d) {
  const int n = static_cast<int>(A.cols() > 0 ? A.cols() : C.cols());
  const int m = static_cast<int>(A.rows());
  const int q = static_cast<int>(C.rows());
  // max -s  s.t.  A x - s 1 <= b,  +-(C x - d) - s 1 <= 0,  -s <= 1.
  Matrix G(m + 2 * q + 1, n + 1);
  Vector h(m + 2 * q + 1);
  G.setZero();
  if (m > 0) {
    G.topLeftCorner(m, n) = A;
    G.topRightCorner(m, 1).setConstant(-1.0);
    h.head(m) = b;
  }
  for (int i = 0; i < q; ++i) {
    G.row(m + 2 * i).head(n) = C.row(i);
    G(m + 2 * i, n) = -1.0;
    h[m + 2 * i] = d[i];
    G.row(m + 2 * i + 1).head(n) = -C.row(i);
    G(m + 2 * i + 1, n) = -1.0;
    h[m + 2 * i + 1] = -d[i];
  }
  G(m + 2 * q, n) = -1.0;
  h[m + 2 * q] = 1.0;
  Vector c = Vector::Zero(n + 1);
  c[n] = -1.0;
  LpResult lp = solve_lp(G, h, c);
  Phase1 out;
  if (lp.status != LpStatus::optimal) return out; // cannot happen: s=max violation feasible
  out.ok = true;
  out.x = lp.x.head(n);
  out.violation = lp.x[n];
  return out;
}

} // namespace

QpResult solve_qp(const Matrix& H, const Vector& f, const Matrix& A, const Vector& b) {
  return solve_qp(H, f, A, b, Matrix(0, H.rows()), Vector(0));
}

QpResult solve_qp(const Matrix& H, const Vector& f, const Matrix& A, const Vector& b,
                  const Matrix& C, const Vector& d) {
  const int n = static_cast<int>(H.rows());
  const int m = static_cast<int>(A.rows());
  const int q = static_cast<int>(C.rows());
  if (H.cols() != n || f.size() != n || (m > 0 && A.cols() != n) || b.size() != m ||
      (q > 0 && C.cols() != n) || d.size() != q)
    throw std::invalid_argument("solve_qp: dimension mismatch");

  Eigen::LLT<Matrix> llt(0.5 * (H + H.transpose()));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("solve_qp: H not positive definite");

  QpResult res;

  // Feasible start.
  Vector x;
  if (m == 0 && q == 0) {
    x = llt.solve(-f);
    res.status = QpStatus::optimal;
    res.x = x;
    res.value = 0.5 * x.dot(H * x) + f.dot(x);
    res.ineq_multipliers = Vector::Zero(0);
    res.eq_multipliers = Vector::Zero(0);
    res.kkt_residual = (H * x + f).cwiseAbs().maxCoeff();
    return res;
  }
  {
    Phase1 p1 = lp_phase1(A, b, C, d);
    if (!p1.ok || p1.violation > 1e-8) {
      res.status = QpStatus::infeasible;
      if (p1.ok) res.x = p1.x;
      return res;
    }
    x = p1.x;
  }

  // Working set of inequality rows; equalities are always enforced.
  std::vector<int> work;
  std::vector<char> in_work(m, 0);

  auto solve_eqp = [&](Vector& p, Vector& nu) {
    const int w = static_cast<int>(work.size());
    const int rows = q + w;
    Vector g = H * x + f;
    if (rows == 0) {
      p = llt.solve(-g);
      nu.resize(0);
      return;
    }
    Matrix G(rows, n);
    Vector r(rows);
    for (int i = 0; i < q; ++i) {
      G.row(i) = C.row(i);
      r[i] = d[i] - C.row(i).dot(x);
    }
    for (int i = 0; i < w; ++i) {
      G.row(q + i) = A.row(work[i]);
      r[q + i] = b[work[i]] - A.row(work[i]).dot(x);
    }
    Matrix HiGt = llt.solve(G.transpose()); // n x rows
    Matrix S = G * HiGt;                    // rows x rows, SPD when G full row rank
    Vector rhs = -(r + HiGt.transpose() * g);
    nu = S.fullPivLu().solve(rhs);
    p = -llt.solve(g + G.transpose() * nu);
  };

  const int max_iter = 200 + 10 * (m + q);
  bool bland = false;
  int stall = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    Vector p, nu;
    solve_eqp(p, nu);

    if (p.cwiseAbs().maxCoeff() <= kDirTol * (1.0 + x.cwiseAbs().maxCoeff())) {
      // Check multipliers on working inequalities.
      int drop = -1;
      double most_negative = -kMultTol;
      for (int i = 0; i < static_cast<int>(work.size()); ++i) {
        double mult = nu[q + i];
        if (bland) {
          if (mult < -kMultTol && (drop < 0 || work[i] < work[drop])) drop = i;
        } else if (mult < most_negative) {
          most_negative = mult;
          drop = i;
        }
      }
      if (drop < 0) {
        res.status = QpStatus::optimal;
        res.x = x;
        res.value = 0.5 * x.dot(H * x) + f.dot(x);
        res.ineq_multipliers = Vector::Zero(m);
        for (int i = 0; i < static_cast<int>(work.size()); ++i)
          res.ineq_multipliers[work[i]] = std::max(0.0, nu[q + i]);
        res.eq_multipliers = nu.head(q);
        double st = (H * x + f + A.transpose() * res.ineq_multipliers +
                     C.transpose() * res.eq_multipliers)
                        .cwiseAbs()
                        .maxCoeff();
        double pf = 0.0;
        if (m > 0) pf = std::max(pf, (A * x - b).maxCoeff());
        if (q > 0) pf = std::max(pf, (C * x - d).cwiseAbs().maxCoeff());
        double comp = 0.0;
        for (int i = 0; i < m; ++i)
          comp = std::max(comp, std::abs(res.ineq_multipliers[i] * (A.row(i).dot(x) - b[i])));
        res.kkt_residual = std::max({st, std::max(pf, 0.0), comp});
        return res;
      }
      in_work[work[drop]] = 0;
      work.erase(work.begin() + drop);
      continue;
    }

    // Step length limited by inactive inequalities.
    double alpha = 1.0;
    int block = -1;
    for (int i = 0; i < m; ++i) {
      if (in_work[i]) continue;
      double ap = A.row(i).dot(p);
      if (ap > kDirTol) {
        double slack = b[i] - A.row(i).dot(x);
        if (slack < 0.0) slack = 0.0;
        double a = slack / ap;
        if (a < alpha - 1e-12) {
          alpha = a;
          block = i;
        } else if (a < alpha + 1e-12 && block >= 0 && i < block) {
          block = i;
        }
      }
    }
    if (alpha <= 1e-12) {
      if (++stall > m + q + 8) bland = true;
    } else {
      stall = 0;
    }
    x += alpha * p;
    if (block >= 0) {
      work.push_back(block);
      in_work[block] = 1;
      std::sort(work.begin(), work.end());
    }
  }

  res.status = QpStatus::iteration_limit;
  res.x = x;
  res.value = 0.5 * x.dot(H * x) + f.dot(x);
  return res;
}

} // namespace swmpc
