#include "swmpc/polytope.hpp"

#include "swmpc/lp.hpp"
#include "swmpc/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

namespace swmpc {

namespace {

struct Rows {
  Matrix A; // row-normalized unless noted
  Vector b;
  // Ancestor bitmasks over the pre-elimination rows; used by fm_eliminate,
  // empty everywhere else. Pruning helpers keep it aligned when present.
  std::vector<std::vector<uint64_t>> tag;
  int count() const { return static_cast<int>(A.rows()); }
};

int popcount_tag(const std::vector<uint64_t>& t) {
  int c = 0;
  for (uint64_t w : t) c += std::popcount(w);
  return c;
}

// Compacts rows to the given (sorted) index list, carrying tags along.
void keep_rows(Rows& r, const std::vector<int>& kept) {
  if (static_cast<int>(kept.size()) == r.count()) return;
  Matrix A2(static_cast<int>(kept.size()), r.A.cols());
  Vector b2(static_cast<int>(kept.size()));
  std::vector<std::vector<uint64_t>> t2;
  if (!r.tag.empty()) t2.reserve(kept.size());
  for (int i = 0; i < static_cast<int>(kept.size()); ++i) {
    A2.row(i) = r.A.row(kept[i]);
    b2[i] = r.b[kept[i]];
    if (!r.tag.empty()) t2.push_back(std::move(r.tag[kept[i]]));
  }
  r.A = std::move(A2);
  r.b = std::move(b2);
  r.tag = std::move(t2);
}

// Normalizes rows to unit normals, dropping trivial "0'x <= b, b >= 0" rows.
// Returns false when a row reads "0'x <= b" with b < 0 (infeasible).
bool normalize_rows(const Matrix& A, const Vector& b, Rows& out) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  std::vector<int> keep;
  keep.reserve(m);
  for (int i = 0; i < m; ++i) {
    double nrm = A.row(i).norm();
    if (nrm <= tol::zero_norm) {
      if (b[i] < -tol::emptiness) return false;
      continue;
    }
    keep.push_back(i);
  }
  out.A.resize(static_cast<int>(keep.size()), n);
  out.b.resize(static_cast<int>(keep.size()));
  for (int r = 0; r < static_cast<int>(keep.size()); ++r) {
    double nrm = A.row(keep[r]).norm();
    out.A.row(r) = A.row(keep[r]) / nrm;
    out.b[r] = b[keep[r]] / nrm;
  }
  return true;
}

bool lex_less(const Matrix& A, const Vector& b, int i, int j) {
  for (int c = 0; c < A.cols(); ++c) {
    if (A(i, c) < A(j, c)) return true;
    if (A(i, c) > A(j, c)) return false;
  }
  return b[i] < b[j];
}

void sort_rows(Rows& r) {
  const int m = r.count();
  std::vector<int> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int i, int j) { return lex_less(r.A, r.b, i, j); });
  Matrix A2(m, r.A.cols());
  Vector b2(m);
  for (int i = 0; i < m; ++i) {
    A2.row(i) = r.A.row(idx[i]);
    b2[i] = r.b[idx[i]];
  }
  r.A = std::move(A2);
  r.b = std::move(b2);
}

// Removes rows whose normal matches an earlier kept row; the smaller offset
// wins within a matching group. Rows are bucketed by quantized normal to keep
// the pass linear; near-duplicates straddling a bucket boundary survive here
// and fall to the LP-based reduction instead.
void dedupe_rows(Rows& r) {
  const int m = r.count();
  if (m < 2) return;
  const int n = static_cast<int>(r.A.cols());
  std::unordered_map<std::string, int> bucket; // key -> slot in kept
  bucket.reserve(static_cast<size_t>(m) * 2);
  std::vector<int> kept;
  kept.reserve(m);
  std::string key(static_cast<size_t>(n) * sizeof(int64_t), '\0');
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < n; ++c) {
      const int64_t cell = llround(r.A(i, c) / tol::dedupe);
      std::memcpy(key.data() + static_cast<size_t>(c) * sizeof(int64_t), &cell,
                  sizeof(int64_t));
    }
    auto [it, fresh] = bucket.try_emplace(key, static_cast<int>(kept.size()));
    if (fresh) {
      kept.push_back(i);
    } else if (r.b[i] < r.b[kept[it->second]] - tol::dedupe) {
      kept[it->second] = i;
    }
  }
  if (static_cast<int>(kept.size()) == m) return;
  std::sort(kept.begin(), kept.end());
  keep_rows(r, kept);
}

// Chebyshev feasibility: max r s.t. a_i'x + r <= b_i. Rows must be normalized.
// Empty iff the optimum is below -tol::emptiness.
bool rows_nonempty(const Rows& r) {
  const int m = r.count();
  if (m == 0) return true;
  const int n = static_cast<int>(r.A.cols());
  Matrix G(m, n + 1);
  G.leftCols(n) = r.A;
  G.rightCols(1).setOnes();
  Vector c = Vector::Zero(n + 1);
  c[n] = 1.0;
  LpResult lp = solve_lp(G, r.b, c);
  if (lp.status == LpStatus::unbounded) return true;
  if (lp.status == LpStatus::optimal) return lp.value >= -tol::emptiness;
  return false;
}

// Clarkson-style filter: a row proven redundant against the evolving
// essential subset is redundant against the full system, because the full
// feasible set only shrinks as rows are added. Rows the subset cannot bound
// are promoted into it. Promotion walks a ray from a strictly interior point
// toward the refuting maximizer and takes the first hyperplane crossed; that
// row supports the full set at the crossing, so only genuine facets enter the
// subset and it stays near the true facet count. Output keeps every essential
// row and possibly a few redundant ones; the exact pass afterwards settles
// those.
void clarkson_filter(Rows& r) {
  const int m = r.count();
  if (m < 3) return;
  const int n = static_cast<int>(r.A.cols());
  const bool dbg = std::getenv("SWMPC_DEBUG_REDUCE") != nullptr; // temporary
  if (const char* dump = std::getenv("SWMPC_DUMP_ROWS")) {       // temporary
    if (m > 6000) {
      FILE* f = std::fopen(dump, "w");
      std::fprintf(f, "%d %d\n", m, n);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) std::fprintf(f, "%.17g ", r.A(i, j));
        std::fprintf(f, "%.17g\n", r.b[i]);
      }
      std::fclose(f);
      std::abort();
    }
  }
  int dbg_lp = 0, dbg_promote_unb = 0, dbg_promote_ray = 0, dbg_promote_self = 0;

  // Interior anchor for the ray walk: Chebyshev center of the full system.
  // Thin or unbounded sets get no anchor and fall back to self-promotion.
  Vector z;
  bool have_z = false;
  try {
    Matrix G(m, n + 1);
    G.leftCols(n) = r.A;
    G.rightCols(1).setOnes();
    Vector c = Vector::Zero(n + 1);
    c[n] = 1.0;
    LpResult che = solve_lp(G, r.b, c);
    if (che.status == LpStatus::optimal && che.value > 1e-9) {
      z = che.x.head(n);
      have_z = true;
    }
  } catch (const std::runtime_error&) {
  }

  std::vector<int> essential;
  essential.reserve(2 * n + 4);
  std::vector<char> dropped(m, 0);
  std::vector<char> is_essential(m, 0);
  auto promote = [&](int j) {
    essential.push_back(j);
    is_essential[j] = 1;
  };
  // First hyperplane crossed on the segment from z to xs, or -1. Rows already
  // proven redundant hold everywhere the subset allows, so they cannot be hit.
  auto first_hit = [&](const Vector& xs) {
    const Vector dir = xs - z;
    int hit = -1;
    double tmin = 1.0 - 1e-12;
    for (int j = 0; j < m; ++j) {
      if (dropped[j]) continue;
      const double den = r.A.row(j).dot(dir);
      if (den <= 1e-12) continue;
      const double t = (r.b[j] - r.A.row(j).dot(z)) / den;
      if (t < tmin) {
        tmin = t;
        hit = j;
      }
    }
    return hit;
  };
  for (int k = 0; k < m; ++k) {
    if (is_essential[k]) continue;
    for (;;) {
      const int e = static_cast<int>(essential.size());
      if (e == 0) {
        promote(k);
        break;
      }
      Matrix Ae(e, n);
      Vector be(e);
      for (int i = 0; i < e; ++i) {
        Ae.row(i) = r.A.row(essential[i]);
        be[i] = r.b[essential[i]];
      }
      LpResult lp = solve_lp(Ae, be, r.A.row(k).transpose());
      ++dbg_lp;
      if (lp.status == LpStatus::optimal &&
          lp.value <= r.b[k] + tol::redundancy) {
        dropped[k] = 1;
        break;
      }
      int pick = -1;
      if (lp.status == LpStatus::optimal && have_z) {
        pick = first_hit(lp.x);
        if (pick >= 0 && is_essential[pick]) pick = -1;
      }
      if (pick < 0) {
        if (lp.status == LpStatus::optimal)
          ++dbg_promote_self;
        else
          ++dbg_promote_unb;
        promote(k);
        break;
      }
      ++dbg_promote_ray;
      promote(pick);
      if (pick == k) break;
    }
  }
  if (dbg)
    std::fprintf(stderr,
                 "[reduce] m=%d n=%d essential=%d lps=%d unb=%d ray=%d self=%d\n",
                 m, n, static_cast<int>(essential.size()), dbg_lp,
                 dbg_promote_unb, dbg_promote_ray, dbg_promote_self);
  std::vector<int> kept;
  kept.reserve(m);
  for (int k = 0; k < m; ++k)
    if (!dropped[k]) kept.push_back(k);
  keep_rows(r, kept);
}

// Drops rows implied by the others. Parallel flagging pass over the full set,
// then a serial confirmation in index order so mutually redundant rows are
// resolved deterministically regardless of thread count.
void reduce_rows(Rows& r) {
  clarkson_filter(r);
  const int m = r.count();
  if (m < 2) return;
  std::vector<char> flagged(m, 0);
  parallel_for(m, [&](int k) {
    Vector b2 = r.b;
    b2[k] += 1.0;
    LpResult lp = solve_lp(r.A, b2, r.A.row(k).transpose());
    flagged[k] =
        lp.status == LpStatus::optimal && lp.value <= r.b[k] + tol::redundancy;
  });

  std::vector<char> keep(m, 1);
  for (int k = 0; k < m; ++k) {
    if (!flagged[k]) continue;
    std::vector<int> rows;
    rows.reserve(m);
    for (int j = 0; j < m; ++j)
      if (j != k && keep[j]) rows.push_back(j);
    Matrix A2(static_cast<int>(rows.size()) + 1, r.A.cols());
    Vector b2(static_cast<int>(rows.size()) + 1);
    for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
      A2.row(i) = r.A.row(rows[i]);
      b2[i] = r.b[rows[i]];
    }
    A2.row(rows.size()) = r.A.row(k);
    b2[rows.size()] = r.b[k] + 1.0;
    LpResult lp = solve_lp(A2, b2, r.A.row(k).transpose());
    if (lp.status == LpStatus::optimal && lp.value <= r.b[k] + tol::redundancy)
      keep[k] = 0;
  }

  std::vector<int> kept;
  kept.reserve(m);
  for (int k = 0; k < m; ++k)
    if (keep[k]) kept.push_back(k);
  keep_rows(r, kept);
}

// Fourier-Motzkin elimination of the listed columns (entries zeroed, width
// kept). Rows are renormalized and pruned after every eliminated variable.
// Kohler's rule bounds the combinatorial growth: a row that survives q
// eliminations irredundantly combines at most q + 1 of the original rows, so
// any pairing exceeding that ancestor count is dropped at generation time.
// Returns false if a contradiction row appears (system infeasible).
bool fm_eliminate(Rows& r, std::vector<int> victims) {
  {
    Rows rn;
    if (!normalize_rows(r.A, r.b, rn)) return false;
    r = std::move(rn);
  }
  const int m0 = r.count();
  const int words = (m0 + 63) / 64;
  r.tag.assign(m0, std::vector<uint64_t>(words, 0));
  for (int i = 0; i < m0; ++i) r.tag[i][i >> 6] |= uint64_t{1} << (i & 63);
  int eliminated = 0;
  while (!victims.empty()) {
    // Pick the variable with the fewest pos*neg pairings.
    int best = -1;
    long best_score = -1;
    for (size_t vi = 0; vi < victims.size(); ++vi) {
      int c = victims[vi];
      long pos = 0, neg = 0;
      for (int i = 0; i < r.count(); ++i) {
        if (r.A(i, c) > tol::fm_zero) ++pos;
        else if (r.A(i, c) < -tol::fm_zero) ++neg;
      }
      long score = pos * neg;
      if (best < 0 || score < best_score) {
        best = static_cast<int>(vi);
        best_score = score;
      }
    }
    const int col = victims[best];
    victims.erase(victims.begin() + best);

    std::vector<int> pos, neg, rest;
    for (int i = 0; i < r.count(); ++i) {
      if (r.A(i, col) > tol::fm_zero) pos.push_back(i);
      else if (r.A(i, col) < -tol::fm_zero) neg.push_back(i);
      else rest.push_back(i);
    }

    ++eliminated;
    const int max_ancestors = eliminated + 1;
    const int n = static_cast<int>(r.A.cols());
    std::vector<Vector> rows;
    std::vector<double> offs;
    std::vector<std::vector<uint64_t>> tags;
    rows.reserve(rest.size() + pos.size() * neg.size());
    for (int i : rest) {
      Vector v = r.A.row(i).transpose();
      v[col] = 0.0;
      rows.push_back(std::move(v));
      offs.push_back(r.b[i]);
      tags.push_back(r.tag[i]);
    }
    if (!pos.empty() && !neg.empty()) {
      std::vector<uint64_t> t(words);
      for (int ip : pos) {
        const double cp = r.A(ip, col);
        for (int in : neg) {
          for (int w = 0; w < words; ++w) t[w] = r.tag[ip][w] | r.tag[in][w];
          if (popcount_tag(t) > max_ancestors) continue;
          const double cn = -r.A(in, col);
          Vector v = r.A.row(ip).transpose() / cp + r.A.row(in).transpose() / cn;
          v[col] = 0.0;
          double off = r.b[ip] / cp + r.b[in] / cn;
          double nrm = v.norm();
          if (nrm <= tol::zero_norm) {
            if (off < -tol::emptiness) return false;
            continue;
          }
          rows.push_back(v / nrm);
          offs.push_back(off / nrm);
          tags.push_back(t);
        }
      }
    }
    r.A.resize(static_cast<int>(rows.size()), n);
    r.b.resize(static_cast<int>(rows.size()));
    for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
      r.A.row(i) = rows[i];
      r.b[i] = offs[i];
    }
    r.tag = std::move(tags);
    dedupe_rows(r);
    // Reduce exactly after each step; redundant survivors would multiply in
    // the next pairing pass.
    reduce_rows(r);
  }
  r.tag.clear();
  return true;
}

Rows slice_columns(const Rows& r, const std::vector<int>& cols) {
  Rows out;
  out.A.resize(r.count(), static_cast<int>(cols.size()));
  out.b = r.b;
  for (int c = 0; c < static_cast<int>(cols.size()); ++c)
    out.A.col(c) = r.A.col(cols[c]);
  return out;
}

} // namespace

Polytope canonicalize(const Matrix& A, const Vector& b) {
  const int n = static_cast<int>(A.cols());
  if (n < 1) throw std::invalid_argument("canonicalize: dimension must be positive");
  if (A.rows() != b.size()) throw std::invalid_argument("canonicalize: A and b disagree");
  if (!A.allFinite() || !b.allFinite())
    throw std::invalid_argument("canonicalize: non-finite data");

  Polytope P;
  P.dim_ = n;
  Rows r;
  if (!normalize_rows(A, b, r)) {
    P.empty_ = true;
    P.A_.resize(0, n);
    P.b_.resize(0);
    return P;
  }
  sort_rows(r);
  dedupe_rows(r);
  if (!rows_nonempty(r)) {
    P.empty_ = true;
    P.A_.resize(0, n);
    P.b_.resize(0);
    return P;
  }
  reduce_rows(r);
  P.A_ = std::move(r.A);
  P.b_ = std::move(r.b);
  return P;
}

Polytope Polytope::from_inequalities(const Matrix& A, const Vector& b) {
  return canonicalize(A, b);
}

Polytope Polytope::whole_space(int dim) {
  if (dim < 1) throw std::invalid_argument("whole_space: dimension must be positive");
  Polytope P;
  P.dim_ = dim;
  P.A_.resize(0, dim);
  P.b_.resize(0);
  return P;
}

Polytope Polytope::empty_set(int dim) {
  if (dim < 1) throw std::invalid_argument("empty_set: dimension must be positive");
  Polytope P;
  P.dim_ = dim;
  P.A_.resize(0, dim);
  P.b_.resize(0);
  P.empty_ = true;
  return P;
}

Polytope Polytope::box(const Vector& lower, const Vector& upper) {
  const int n = static_cast<int>(lower.size());
  if (upper.size() != n || n < 1) throw std::invalid_argument("box: bad bounds");
  Matrix A(2 * n, n);
  Vector b(2 * n);
  A.setZero();
  for (int i = 0; i < n; ++i) {
    A(2 * i, i) = 1.0;
    b[2 * i] = upper[i];
    A(2 * i + 1, i) = -1.0;
    b[2 * i + 1] = -lower[i];
  }
  return canonicalize(A, b);
}

Polytope Polytope::centered_box(int dim, double halfwidth) {
  Vector h = Vector::Constant(dim, halfwidth);
  return box(-h, h);
}

Polytope Polytope::singleton(const Vector& point) {
  const int n = static_cast<int>(point.size());
  if (n < 1) throw std::invalid_argument("singleton: bad point");
  return box(point, point);
}

bool Polytope::is_bounded() const {
  if (empty_) return true;
  if (A_.rows() == 0) return false;
  for (int d = 0; d < dim_; ++d) {
    Vector c = Vector::Zero(dim_);
    c[d] = 1.0;
    if (solve_lp(A_, b_, c).status == LpStatus::unbounded) return false;
    if (solve_lp(A_, b_, -c).status == LpStatus::unbounded) return false;
  }
  return true;
}

bool Polytope::is_singleton(double tol) const {
  if (empty_ || A_.rows() == 0) return false;
  for (int d = 0; d < dim_; ++d) {
    Vector c = Vector::Zero(dim_);
    c[d] = 1.0;
    LpResult hi = solve_lp(A_, b_, c);
    if (hi.status != LpStatus::optimal) return false;
    LpResult lo = solve_lp(A_, b_, -c);
    if (lo.status != LpStatus::optimal) return false;
    if (hi.value + lo.value > tol) return false; // width along axis d
  }
  return true;
}

bool Polytope::contains(const Vector& x, double tol) const {
  if (x.size() != dim_) throw std::invalid_argument("contains: dimension mismatch");
  if (empty_) return false;
  if (A_.rows() == 0) return true;
  return ((A_ * x - b_).maxCoeff() <= tol);
}

double Polytope::support(const Vector& direction) const {
  if (direction.size() != dim_)
    throw std::invalid_argument("support: dimension mismatch");
  if (empty_) throw EmptySetError("support: empty set");
  LpResult lp = solve_lp(A_, b_, direction);
  if (lp.status == LpStatus::unbounded)
    throw UnboundedDirectionError("support: unbounded direction");
  if (lp.status != LpStatus::optimal)
    throw std::runtime_error("support: solver failure");
  return lp.value;
}

Vector Polytope::support_point(const Vector& direction) const {
  if (direction.size() != dim_)
    throw std::invalid_argument("support_point: dimension mismatch");
  if (empty_) throw EmptySetError("support_point: empty set");
  LpResult lp = solve_lp(A_, b_, direction);
  if (lp.status == LpStatus::unbounded)
    throw UnboundedDirectionError("support_point: unbounded direction");
  if (lp.status != LpStatus::optimal)
    throw std::runtime_error("support_point: solver failure");
  return lp.x;
}

Vector Polytope::chebyshev_center() const {
  if (empty_) throw EmptySetError("chebyshev_center: empty set");
  if (A_.rows() == 0) return Vector::Zero(dim_);
  Matrix G(A_.rows(), dim_ + 1);
  G.leftCols(dim_) = A_;
  G.rightCols(1).setOnes();
  Vector c = Vector::Zero(dim_ + 1);
  c[dim_] = 1.0;
  LpResult lp = solve_lp(G, b_, c);
  if (lp.status == LpStatus::unbounded)
    throw UnboundedDirectionError("chebyshev_center: unbounded set");
  if (lp.status != LpStatus::optimal)
    throw std::runtime_error("chebyshev_center: solver failure");
  return lp.x.head(dim_);
}

Polytope intersect(const Polytope& P, const Polytope& Q) {
  if (P.dim() != Q.dim()) throw std::invalid_argument("intersect: dimension mismatch");
  if (P.is_empty() || Q.is_empty()) return Polytope::empty_set(P.dim());
  if (P.is_whole_space()) return Q;
  if (Q.is_whole_space()) return P;
  Matrix A(P.num_rows() + Q.num_rows(), P.dim());
  Vector b(P.num_rows() + Q.num_rows());
  A.topRows(P.num_rows()) = P.normals();
  A.bottomRows(Q.num_rows()) = Q.normals();
  b.head(P.num_rows()) = P.offsets();
  b.tail(Q.num_rows()) = Q.offsets();
  return canonicalize(A, b);
}

Polytope minkowski_sum(const Polytope& P, const Polytope& Q) {
  const int n = P.dim();
  if (Q.dim() != n) throw std::invalid_argument("minkowski_sum: dimension mismatch");
  if (P.is_empty() || Q.is_empty()) return Polytope::empty_set(n);
  if (P.is_whole_space() || Q.is_whole_space()) return Polytope::whole_space(n);

  // Lift over (x, p): p in P and x - p in Q, then eliminate p.
  const int mp = P.num_rows();
  const int mq = Q.num_rows();
  Rows r;
  r.A.resize(mp + mq, 2 * n);
  r.b.resize(mp + mq);
  r.A.setZero();
  r.A.block(0, n, mp, n) = P.normals();
  r.b.head(mp) = P.offsets();
  r.A.block(mp, 0, mq, n) = Q.normals();
  r.A.block(mp, n, mq, n) = -Q.normals();
  r.b.tail(mq) = Q.offsets();

  std::vector<int> victims(n);
  std::iota(victims.begin(), victims.end(), n);
  if (!fm_eliminate(r, victims)) return Polytope::empty_set(n);
  std::vector<int> cols(n);
  std::iota(cols.begin(), cols.end(), 0);
  Rows out = slice_columns(r, cols);
  return canonicalize(out.A, out.b);
}

Polytope pontryagin_diff(const Polytope& P, const Polytope& Q) {
  const int n = P.dim();
  if (Q.dim() != n) throw std::invalid_argument("pontryagin_diff: dimension mismatch");
  if (P.is_empty() || Q.is_empty()) return Polytope::empty_set(n);
  if (P.is_whole_space()) return Polytope::whole_space(n);
  Matrix A = P.normals();
  Vector b = P.offsets();
  for (int k = 0; k < A.rows(); ++k) {
    LpResult lp = solve_lp(Q.normals(), Q.offsets(), A.row(k).transpose());
    if (lp.status == LpStatus::unbounded) return Polytope::empty_set(n);
    if (lp.status != LpStatus::optimal)
      throw std::runtime_error("pontryagin_diff: support failure");
    b[k] -= lp.value;
  }
  return canonicalize(A, b);
}

Polytope affine_image(const Polytope& P, const Matrix& M) {
  const int n = P.dim();
  const int m = static_cast<int>(M.rows());
  if (M.cols() != n) throw std::invalid_argument("affine_image: dimension mismatch");
  if (m < 1) throw std::invalid_argument("affine_image: empty target dimension");
  if (P.is_empty()) return Polytope::empty_set(m);

  if (P.is_whole_space()) {
    Eigen::FullPivLU<Matrix> lu(M.transpose()); // kernel of M' spans normals of range(M)
    if (lu.rank() == m) return Polytope::whole_space(m);
    Matrix K = lu.kernel(); // m x k
    Matrix A(2 * K.cols(), m);
    for (int i = 0; i < K.cols(); ++i) {
      A.row(2 * i) = K.col(i).transpose();
      A.row(2 * i + 1) = -K.col(i).transpose();
    }
    return canonicalize(A, Vector::Zero(A.rows()));
  }

  if (m == n) {
    Eigen::FullPivLU<Matrix> lu(M);
    if (lu.isInvertible())
      return canonicalize(P.normals() * lu.inverse(), P.offsets());
  }

  // Lift over (y, x): y = M x, x in P; eliminate x.
  const int width = m + n;
  Matrix ineqA(P.num_rows(), width);
  ineqA.setZero();
  ineqA.rightCols(n) = P.normals();
  Vector ineqB = P.offsets();

  Matrix eqA(m, width);
  eqA.setZero();
  eqA.leftCols(m).setIdentity();
  eqA.rightCols(n) = -M;
  Vector eqB = Vector::Zero(m);

  std::vector<char> is_victim(width, 0);
  for (int c = m; c < width; ++c) is_victim[c] = 1;
  std::vector<char> eq_alive(m, 1);

  // Gaussian substitution where an equality provides a pivot.
  while (true) {
    int best_eq = -1, best_col = -1;
    double best = 1e-9;
    for (int e = 0; e < m; ++e) {
      if (!eq_alive[e]) continue;
      for (int c = m; c < width; ++c) {
        if (!is_victim[c]) continue;
        if (std::abs(eqA(e, c)) > best) {
          best = std::abs(eqA(e, c));
          best_eq = e;
          best_col = c;
        }
      }
    }
    if (best_eq < 0) break;
    const double piv = eqA(best_eq, best_col);
    Vector prow = eqA.row(best_eq).transpose() / piv;
    const double prhs = eqB[best_eq] / piv;
    for (int e = 0; e < m; ++e) {
      if (e == best_eq || !eq_alive[e]) continue;
      double c0 = eqA(e, best_col);
      if (c0 == 0.0) continue;
      eqA.row(e) -= c0 * prow.transpose();
      eqA(e, best_col) = 0.0;
      eqB[e] -= c0 * prhs;
    }
    for (int i = 0; i < ineqA.rows(); ++i) {
      double c0 = ineqA(i, best_col);
      if (c0 == 0.0) continue;
      ineqA.row(i) -= c0 * prow.transpose();
      ineqA(i, best_col) = 0.0;
      ineqB[i] -= c0 * prhs;
    }
    eq_alive[best_eq] = 0;
    is_victim[best_col] = 0;
  }

  // Any leftover victims have no equality pivot; eliminate them from the
  // inequalities directly.
  Rows r;
  r.A = ineqA;
  r.b = ineqB;
  {
    Rows rn;
    if (!normalize_rows(r.A, r.b, rn)) return Polytope::empty_set(m);
    r = std::move(rn);
  }
  std::vector<int> victims;
  for (int c = m; c < width; ++c)
    if (is_victim[c]) victims.push_back(c);
  if (!victims.empty() && !fm_eliminate(r, victims)) return Polytope::empty_set(m);

  // Residual live equalities now involve only y; add them as row pairs.
  std::vector<int> live;
  for (int e = 0; e < m; ++e)
    if (eq_alive[e]) live.push_back(e);
  Matrix A2(r.count() + 2 * static_cast<int>(live.size()), width);
  Vector b2(A2.rows());
  A2.topRows(r.count()) = r.A;
  b2.head(r.count()) = r.b;
  for (int i = 0; i < static_cast<int>(live.size()); ++i) {
    A2.row(r.count() + 2 * i) = eqA.row(live[i]);
    b2[r.count() + 2 * i] = eqB[live[i]];
    A2.row(r.count() + 2 * i + 1) = -eqA.row(live[i]);
    b2[r.count() + 2 * i + 1] = -eqB[live[i]];
  }

  Rows full;
  full.A = std::move(A2);
  full.b = std::move(b2);
  std::vector<int> cols(m);
  std::iota(cols.begin(), cols.end(), 0);
  Rows out = slice_columns(full, cols);
  return canonicalize(out.A, out.b);
}

Polytope affine_preimage(const Polytope& P, const Matrix& M) {
  const int p = P.dim();
  if (M.rows() != p) throw std::invalid_argument("affine_preimage: dimension mismatch");
  const int n = static_cast<int>(M.cols());
  if (n < 1) throw std::invalid_argument("affine_preimage: empty source dimension");
  if (P.is_empty()) return Polytope::empty_set(n);
  if (P.is_whole_space()) return Polytope::whole_space(n);
  return canonicalize(P.normals() * M, P.offsets());
}

Polytope project_out(const Polytope& P, const std::vector<int>& coords) {
  const int n = P.dim();
  std::vector<char> kill(n, 0);
  for (int c : coords) {
    if (c < 0 || c >= n) throw std::invalid_argument("project_out: coordinate out of range");
    if (kill[c]) throw std::invalid_argument("project_out: repeated coordinate");
    kill[c] = 1;
  }
  const int keep_n = n - static_cast<int>(coords.size());
  if (keep_n < 1) throw std::invalid_argument("project_out: must keep at least one coordinate");
  if (P.is_empty()) return Polytope::empty_set(keep_n);
  if (P.is_whole_space()) return Polytope::whole_space(keep_n);

  Rows r;
  r.A = P.normals();
  r.b = P.offsets();
  std::vector<int> victims(coords);
  if (!fm_eliminate(r, victims)) return Polytope::empty_set(keep_n);
  std::vector<int> cols;
  for (int c = 0; c < n; ++c)
    if (!kill[c]) cols.push_back(c);
  Rows out = slice_columns(r, cols);
  return canonicalize(out.A, out.b);
}

Polytope scale(const Polytope& P, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("scale: factor must be positive");
  if (P.is_empty() || P.is_whole_space() || s == 1.0) return P;
  return canonicalize(P.normals(), P.offsets() * s);
}

bool is_subset(const Polytope& P, const Polytope& Q, double tol) {
  if (P.dim() != Q.dim()) throw std::invalid_argument("is_subset: dimension mismatch");
  if (P.is_empty()) return true;
  if (Q.is_empty()) return false;
  if (Q.is_whole_space()) return true;
  const int m = Q.num_rows();
  std::vector<char> ok(m, 0);
  parallel_for(m, [&](int k) {
    LpResult lp = solve_lp(P.normals(), P.offsets(), Q.normals().row(k).transpose());
    ok[k] = lp.status == LpStatus::optimal && lp.value <= Q.offsets()[k] + tol;
  });
  for (int k = 0; k < m; ++k)
    if (!ok[k]) return false;
  return true;
}

bool set_equal(const Polytope& P, const Polytope& Q, double tol) {
  return is_subset(P, Q, tol) && is_subset(Q, P, tol);
}

std::vector<Vector> vertices_2d(const Polytope& P) {
  if (P.dim() != 2) throw std::invalid_argument("vertices_2d: dimension must be 2");
  if (P.is_empty()) return {};
  if (!P.is_bounded()) throw std::invalid_argument("vertices_2d: unbounded set");
  const Matrix& A = P.normals();
  const Vector& b = P.offsets();
  const int m = P.num_rows();
  std::vector<Vector> verts;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      double det = A(i, 0) * A(j, 1) - A(i, 1) * A(j, 0);
      if (std::abs(det) <= 1e-10) continue;
      Vector v(2);
      v[0] = (b[i] * A(j, 1) - b[j] * A(i, 1)) / det;
      v[1] = (A(i, 0) * b[j] - A(j, 0) * b[i]) / det;
      if (!P.contains(v, 1e-7)) continue;
      bool dup = false;
      for (const Vector& w : verts)
        if ((v - w).cwiseAbs().maxCoeff() <= 1e-7) { dup = true; break; }
      if (!dup) verts.push_back(v);
    }
  }
  if (verts.empty()) {
    // Flat or singleton set: fall back on the Chebyshev center.
    verts.push_back(P.chebyshev_center());
    return verts;
  }
  Vector c = Vector::Zero(2);
  for (const Vector& v : verts) c += v;
  c /= static_cast<double>(verts.size());
  std::sort(verts.begin(), verts.end(), [&](const Vector& u, const Vector& v) {
    double au = std::atan2(u[1] - c[1], u[0] - c[0]);
    double av = std::atan2(v[1] - c[1], v[0] - c[0]);
    if (au != av) return au < av;
    return (u - c).squaredNorm() < (v - c).squaredNorm();
  });
  return verts;
}

} // namespace swmpc
