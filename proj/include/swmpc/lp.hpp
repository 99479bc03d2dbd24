#pragma once

#include "swmpc/linalg.hpp"

namespace swmpc {

enum class LpStatus { optimal, infeasible, unbounded };

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  double value = 0.0; // max c'x when optimal
  Vector x;           // an optimizer when optimal
  Vector y;           // row multipliers: y >= 0, A'y = c, b'y = value
};

// Solves max c'x subject to A x <= b with x free.
// Infeasible and unbounded outcomes are reported distinctly.
LpResult solve_lp(const Matrix& A, const Vector& b, const Vector& c);

} // namespace swmpc
