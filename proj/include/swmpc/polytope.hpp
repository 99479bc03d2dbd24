#pragma once

#include "swmpc/linalg.hpp"
#include "swmpc/tolerances.hpp"

#include <stdexcept>
#include <vector>

namespace swmpc {

struct EmptySetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnboundedDirectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Convex polyhedron {x : A x <= b} in canonical form: unit-norm rows,
// lexicographically sorted, duplicate-free, irredundant. Zero rows with
// is_empty()==false denotes the whole space; emptiness is decided at
// construction and cached. Instances are immutable afterwards and safe to
// share across threads.
class Polytope {
public:
  Polytope() = default;

  static Polytope from_inequalities(const Matrix& A, const Vector& b);
  static Polytope whole_space(int dim);
  static Polytope empty_set(int dim);
  static Polytope box(const Vector& lower, const Vector& upper);
  static Polytope centered_box(int dim, double halfwidth);
  static Polytope singleton(const Vector& point);

  int dim() const { return dim_; }
  int num_rows() const { return static_cast<int>(A_.rows()); }
  const Matrix& normals() const { return A_; }
  const Vector& offsets() const { return b_; }

  bool is_empty() const { return empty_; }
  bool is_whole_space() const { return !empty_ && A_.rows() == 0; }
  bool is_bounded() const;                        // empty set counts as bounded
  bool is_singleton(double tol = 1e-10) const;

  bool contains(const Vector& x, double tol = tol::membership) const;
  double support(const Vector& direction) const;  // max d'x over the set
  Vector support_point(const Vector& direction) const;
  Vector chebyshev_center() const;

private:
  int dim_ = 0;
  Matrix A_;
  Vector b_;
  bool empty_ = false;

  friend Polytope canonicalize(const Matrix& A, const Vector& b);
};

// Builds the canonical form; identical to Polytope::from_inequalities.
Polytope canonicalize(const Matrix& A, const Vector& b);

Polytope intersect(const Polytope& P, const Polytope& Q);
Polytope minkowski_sum(const Polytope& P, const Polytope& Q);

// {x : x + q in P for all q in Q}. Unbounded Q in a constrained direction of
// P yields the empty set.
Polytope pontryagin_diff(const Polytope& P, const Polytope& Q);

Polytope affine_image(const Polytope& P, const Matrix& M);   // {M x : x in P}
Polytope affine_preimage(const Polytope& P, const Matrix& M); // {x : M x in P}

// Eliminates the listed coordinates by Fourier-Motzkin with LP-based
// redundancy pruning after each elimination. Remaining coordinates keep
// their relative order.
Polytope project_out(const Polytope& P, const std::vector<int>& coords);

// {s x : x in P} for s > 0.
Polytope scale(const Polytope& P, double s);

bool is_subset(const Polytope& P, const Polytope& Q, double tol = tol::set_equality);
bool set_equal(const Polytope& P, const Polytope& Q, double tol = tol::set_equality);

// Vertices of a bounded 2-D polytope ordered counterclockwise.
std::vector<Vector> vertices_2d(const Polytope& P);

} // namespace swmpc
