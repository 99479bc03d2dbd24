#pragma once

#include "swmpc/linalg.hpp"

namespace swmpc {

enum class QpStatus { optimal, infeasible, iteration_limit };

struct QpResult {
  QpStatus status = QpStatus::infeasible;
  Vector x;                // optimizer; for infeasible problems the phase-1 point
  double value = 0.0;      // 0.5 x'Hx + f'x at x
  Vector ineq_multipliers; // length m, >= 0, zero off the active set
  Vector eq_multipliers;   // length q
  double kkt_residual = 0.0;
  int iterations = 0;
};

// Minimizes 0.5 x'Hx + f'x subject to A x <= b and C x = d.
// H must be symmetric positive definite. Primal active-set method with an
// LP phase 1; deterministic pivoting.
QpResult solve_qp(const Matrix& H, const Vector& f, const Matrix& A, const Vector& b,
                  const Matrix& C, const Vector& d);
QpResult solve_qp(const Matrix& H, const Vector& f, const Matrix& A, const Vector& b);

} // namespace swmpc
