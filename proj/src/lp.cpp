#include "swmpc/lp.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace swmpc {

namespace {

constexpr double kPivTol = 1e-9;
constexpr double kOptTol = 1e-9;
constexpr int kMaxIter = 50000;
constexpr int kStallLimit = 100;

// min g'z subject to E z = h, z >= 0.
struct EqForm {
  enum class Status { optimal, infeasible, unbounded };
  Status status = Status::infeasible;
  Vector z;      // length p
  Vector lambda; // per original equation, 0 for deleted (dependent) rows
  double value = 0.0;
};

struct Tableau {
  Matrix M;                 // [E | I] with current rows
  Vector h;                 // current rhs, >= 0 at phase-1 start
  int p = 0;                // original variable count
  std::vector<int> row_id;  // current row -> original row index
  std::vector<int> basis;   // per current row: column index into M

  int rows() const { return static_cast<int>(M.rows()); }
  int cols() const { return static_cast<int>(M.cols()); }
  bool is_artificial(int col) const { return col >= p; }

  void rebuild_without_row(int r) {
    const int k = rows();
    Matrix M2(k - 1, p + k - 1);
    Vector h2(k - 1);
    std::vector<int> id2, basis2;
    id2.reserve(k - 1);
    basis2.reserve(k - 1);
    // Artificial column for current row j sits at p + j; dropping row r drops
    // that column and shifts the later ones down by one.
    auto map_col = [&](int c) {
      if (c < p) return c;
      int art_row = c - p;
      if (art_row == r) return -1;
      return art_row < r ? c : c - 1;
    };
    int rr = 0;
    for (int i = 0; i < k; ++i) {
      if (i == r) continue;
      M2.row(rr).head(p) = M.row(i).head(p);
      h2[rr] = h[i];
      id2.push_back(row_id[i]);
      int bc = map_col(basis[i]);
      if (bc < 0) throw std::runtime_error("simplex: dropped a basic column");
      basis2.push_back(bc);
      ++rr;
    }
    M2.rightCols(k - 1).setZero();
    for (int i = 0; i < k - 1; ++i) M2(i, p + i) = 1.0;
    M = std::move(M2);
    h = std::move(h2);
    row_id = std::move(id2);
    basis = std::move(basis2);
  }
};

struct PhaseResult {
  bool unbounded = false;
  double value = 0.0;
  Vector xB;
  Vector lambda;
};

// Runs simplex to optimality on the current basis for the cost vector cost.
// allow_artificials controls whether artificial columns may enter. piv_tol
// and bland_start trade speed for numerical caution on degenerate systems.
PhaseResult run_phase(Tableau& t, const Vector& cost, bool allow_artificials,
                      double piv_tol = kPivTol, bool bland_start = false) {
  const int k = t.rows();
  PhaseResult res;
  bool bland = bland_start;
  int stall = 0;
  double prev_obj = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < kMaxIter; ++iter) {
    Matrix B(k, k);
    Vector gB(k);
    for (int i = 0; i < k; ++i) {
      B.col(i) = t.M.col(t.basis[i]);
      gB[i] = cost[t.basis[i]];
    }
    Eigen::PartialPivLU<Matrix> lu(B);
    // One step of iterative refinement keeps the basic solution and the
    // pricing vector reliable on ill-conditioned bases.
    Vector xB = lu.solve(t.h);
    xB += lu.solve(Vector(t.h - B * xB));
    Vector lambda = lu.transpose().solve(gB);
    Vector lfix = lu.transpose().solve(Vector(gB - B.transpose() * lambda));
    lambda += lfix;
    if (!xB.allFinite() || !lambda.allFinite())
      throw std::runtime_error("simplex: singular basis");

    double obj = gB.dot(xB);
    if (obj < prev_obj - 1e-13) {
      stall = 0;
      prev_obj = obj;
    } else if (++stall > kStallLimit) {
      bland = true;
    }

    // Entering column.
    int enter = -1;
    double best = -kOptTol;
    for (int j = 0; j < t.cols(); ++j) {
      if (!allow_artificials && t.is_artificial(j)) continue;
      bool basic = false;
      for (int i = 0; i < k; ++i)
        if (t.basis[i] == j) { basic = true; break; }
      if (basic) continue;
      double r = cost[j] - lambda.dot(t.M.col(j));
      if (bland) {
        if (r < -kOptTol) { enter = j; break; }
      } else if (r < best) {
        best = r;
        enter = j;
      }
    }
    if (enter < 0) {
      res.value = obj;
      res.xB = xB;
      res.lambda = lambda;
      return res;
    }

    Vector d = lu.solve(t.M.col(enter));
    d += lu.solve(t.M.col(enter) - B * d);
    int leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    // Pivots below piv_tol are unusable, but their existence still rules out
    // a ray; fall back to the largest such pivot instead of reporting the
    // problem unbounded.
    int tiny = -1;
    double tiny_d = 0.01 * piv_tol;
    for (int i = 0; i < k; ++i) {
      if (d[i] > tiny_d && d[i] <= piv_tol) {
        tiny_d = d[i];
        tiny = i;
      }
      if (d[i] > piv_tol) {
        double num = xB[i] > 0.0 ? xB[i] : 0.0;
        double ratio = num / d[i];
        if (ratio < best_ratio - 1e-12) {
          best_ratio = ratio;
          leave = i;
        } else if (ratio < best_ratio + 1e-12 && leave >= 0) {
          if (bland) {
            // Bland's rule needs the lowest basis column index outright,
            // or termination is no longer guaranteed.
            if (t.basis[i] < t.basis[leave]) leave = i;
          } else {
            // Prefer kicking artificials out, then lowest column id.
            bool cand_art = t.is_artificial(t.basis[i]);
            bool cur_art = t.is_artificial(t.basis[leave]);
            if (cand_art != cur_art) {
              if (cand_art) leave = i;
            } else if (t.basis[i] < t.basis[leave]) {
              leave = i;
            }
          }
        }
      }
    }
    if (leave < 0 && tiny >= 0) leave = tiny;
    if (leave < 0) {
      res.unbounded = true;
      return res;
    }
    t.basis[leave] = enter;
  }
  throw std::runtime_error("simplex: iteration limit exceeded (" +
                           std::to_string(t.rows()) + " rows, " +
                           std::to_string(t.cols()) + " cols)");
}

EqForm solve_equality_form_once(const Matrix& E_all, const Vector& h_all,
                                const Vector& g, double piv_tol,
                                bool bland_start) {
  const int k_all = static_cast<int>(E_all.rows());
  const int p = static_cast<int>(E_all.cols());
  if (h_all.size() != k_all || g.size() != p)
    throw std::invalid_argument("solve_equality_form: dimension mismatch");

  // Rank presolve. The simplex below needs full row rank: dependent
  // equations either repeat kept information (drop them) or contradict it
  // (infeasible). Keeping them around instead manufactures singular bases.
  Matrix E;
  Vector h;
  std::vector<int> row_ids;
  {
    Eigen::ColPivHouseholderQR<Matrix> qr(E_all.transpose());
    qr.setThreshold(1e-10);
    const int r = static_cast<int>(qr.rank());
    if (r < k_all) {
      const auto& perm = qr.colsPermutation().indices();
      row_ids.assign(perm.data(), perm.data() + r);
      std::sort(row_ids.begin(), row_ids.end());
      std::vector<char> kept(k_all, 0);
      for (int i : row_ids) kept[i] = 1;
      const double hs = 1e-9 * (1.0 + h_all.cwiseAbs().maxCoeff());
      for (int d = 0; d < k_all; ++d) {
        if (kept[d]) continue;
        Vector alpha = qr.solve(E_all.row(d).transpose());
        if (std::abs(h_all.dot(alpha) - h_all[d]) > hs) {
          EqForm out;
          out.status = EqForm::Status::infeasible;
          return out;
        }
      }
      E.resize(r, p);
      h.resize(r);
      for (int i = 0; i < r; ++i) {
        E.row(i) = E_all.row(row_ids[i]);
        h[i] = h_all[row_ids[i]];
      }
    } else {
      E = E_all;
      h = h_all;
      row_ids.resize(k_all);
      std::iota(row_ids.begin(), row_ids.end(), 0);
    }
  }
  const int k0 = static_cast<int>(E.rows());

  Tableau t;
  t.p = p;
  t.M.resize(k0, p + k0);
  t.h.resize(k0);
  std::vector<double> sign(k_all, 1.0);
  for (int i = 0; i < k0; ++i) {
    if (h[i] < 0.0) {
      t.M.row(i).head(p) = -E.row(i);
      t.h[i] = -h[i];
      sign[row_ids[i]] = -1.0;
    } else {
      t.M.row(i).head(p) = E.row(i);
      t.h[i] = h[i];
    }
    t.row_id.push_back(row_ids[i]);
  }
  t.M.rightCols(k0).setZero();
  for (int i = 0; i < k0; ++i) {
    t.M(i, p + i) = 1.0;
    t.basis.push_back(p + i);
  }

  // Deterministic anti-degeneracy jitter. Repeated rhs values tie the ratio
  // test and stall the pivot on degenerate systems; a fixed per-row offset at
  // 1e-11 scale splits the ties without moving any decision made at 1e-9
  // tolerances. Scaling by the row norm keeps structurally exact rows (all
  // zero, equating the rhs to zero) untouched.
  constexpr double kGolden = 0.6180339887498949;
  for (int i = 0; i < k0; ++i) {
    const double u = (i + 1) * kGolden;
    const double nrm = t.M.row(i).head(p).cwiseAbs().maxCoeff();
    t.h[i] += 1e-11 * std::min(1.0, nrm) * (1.0 + t.h[i]) * (u - std::floor(u));
  }

  EqForm out;

  // Phase 1: minimize the sum of artificials.
  {
    Vector cost1 = Vector::Zero(p + k0);
    cost1.tail(k0).setOnes();
    PhaseResult r1 = run_phase(t, cost1, true, piv_tol, bland_start);
    if (r1.unbounded) throw std::runtime_error("simplex: phase 1 unbounded");
    double feas_tol = 1e-8 * (1.0 + t.h.cwiseAbs().maxCoeff());
    if (r1.value > feas_tol) {
      out.status = EqForm::Status::infeasible;
      return out;
    }
  }

  // Drive leftover artificials out of the basis; delete dependent rows.
  for (int i = 0; i < t.rows();) {
    if (!t.is_artificial(t.basis[i])) { ++i; continue; }
    const int k = t.rows();
    Matrix B(k, k);
    for (int r = 0; r < k; ++r) B.col(r) = t.M.col(t.basis[r]);
    Eigen::PartialPivLU<Matrix> lu(B);
    Vector e = Vector::Zero(k);
    e[i] = 1.0;
    Vector w = lu.transpose().solve(e);
    int pick = -1;
    double best = 1e-7;
    for (int j = 0; j < t.p; ++j) {
      bool basic = false;
      for (int r = 0; r < k; ++r)
        if (t.basis[r] == j) { basic = true; break; }
      if (basic) continue;
      double coeff = std::abs(w.dot(t.M.col(j)));
      if (coeff > best) {
        best = coeff;
        pick = j;
      }
    }
    if (pick >= 0) {
      t.basis[i] = pick;
      ++i;
    } else {
      t.rebuild_without_row(i);
      i = 0; // basis content changed shape; rescan
    }
  }

  // Phase 2.
  {
    const int k = t.rows();
    Vector cost2 = Vector::Zero(t.cols());
    cost2.head(p) = g;
    PhaseResult r2 = run_phase(t, cost2, false, piv_tol, bland_start);
    if (r2.unbounded) {
      out.status = EqForm::Status::unbounded;
      return out;
    }
    out.status = EqForm::Status::optimal;
    out.value = r2.value;
    out.z = Vector::Zero(p);
    for (int i = 0; i < k; ++i)
      if (t.basis[i] < p) out.z[t.basis[i]] = std::max(0.0, r2.xB[i]);
    out.lambda = Vector::Zero(k_all);
    for (int i = 0; i < k; ++i)
      out.lambda[t.row_id[i]] = sign[t.row_id[i]] * r2.lambda[i];
  }
  return out;
}

// Fast settings first; degenerate systems that break the greedy pivot get one
// cautious retry with Bland pivoting and a stiffer pivot threshold.
EqForm solve_equality_form(const Matrix& E, const Vector& h_in, const Vector& g) {
  try {
    return solve_equality_form_once(E, h_in, g, kPivTol, false);
  } catch (const std::runtime_error&) {
    return solve_equality_form_once(E, h_in, g, 1e-7, true);
  }
}

} // namespace

LpResult solve_lp(const Matrix& A, const Vector& b, const Vector& c) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (b.size() != m || c.size() != n)
    throw std::invalid_argument("solve_lp: dimension mismatch");
  if (!A.allFinite() || !b.allFinite() || !c.allFinite())
    throw std::invalid_argument("solve_lp: non-finite data");

  LpResult res;
  if (m == 0) {
    if (c.cwiseAbs().maxCoeff() == 0.0) {
      res.status = LpStatus::optimal;
      res.value = 0.0;
      res.x = Vector::Zero(n);
      res.y = Vector::Zero(0);
    } else {
      res.status = LpStatus::unbounded;
    }
    return res;
  }

  EqForm dual; // temporary debug wrapper
  try {
    dual = solve_equality_form(A.transpose(), c, b);
  } catch (const std::runtime_error&) {
    if (const char* path = std::getenv("SWMPC_DUMP_LP")) {
      FILE* f = std::fopen(path, "w");
      if (f) {
        std::fprintf(f, "%d %d\n", m, n);
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) std::fprintf(f, "%.17g ", A(i, j));
          std::fprintf(f, "%.17g\n", b[i]);
        }
        for (int j = 0; j < n; ++j) std::fprintf(f, "%.17g ", c[j]);
        std::fprintf(f, "\n");
        std::fclose(f);
      }
    }
    throw;
  }
  switch (dual.status) {
    case EqForm::Status::optimal: {
      res.status = LpStatus::optimal;
      res.value = dual.value;
      res.x = dual.lambda;
      res.y = dual.z;
      double viol = (A * res.x - b).maxCoeff();
      if (viol > 1e-6 * (1.0 + b.cwiseAbs().maxCoeff()))
        throw std::runtime_error("solve_lp: recovered point violates constraints");
      return res;
    }
    case EqForm::Status::unbounded:
      // Dual objective unbounded below means no primal-feasible point exists.
      res.status = LpStatus::infeasible;
      return res;
    case EqForm::Status::infeasible: {
      // Dual infeasible: primal is either unbounded or infeasible; Farkas
      // certificate y >= 0, A'y = 0, b'y = -1 exists iff primal infeasible.
      Matrix E2(n + 1, m);
      E2.topRows(n) = A.transpose();
      E2.row(n) = b.transpose();
      Vector h2 = Vector::Zero(n + 1);
      h2[n] = -1.0;
      EqForm farkas = solve_equality_form(E2, h2, Vector::Zero(m));
      res.status = farkas.status == EqForm::Status::infeasible ? LpStatus::unbounded
                                                               : LpStatus::infeasible;
      return res;
    }
  }
  throw std::runtime_error("solve_lp: unreachable");
}

} // namespace swmpc
