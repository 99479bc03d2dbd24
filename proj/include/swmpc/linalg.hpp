#pragma once

#include <Eigen/Dense>

namespace swmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

double spectral_radius(const Matrix& F);

// All eigenvalues strictly inside the unit circle, with margin.
bool is_schur(const Matrix& F, double margin = 1e-9);

// Solves F' X F - X + S = 0 for X (S symmetric). Requires F Schur stable.
Matrix solve_discrete_lyapunov(const Matrix& F, const Matrix& S);

struct RiccatiResult {
  Matrix P;
  Matrix K; // u = K x
  int iterations = 0;
  bool converged = false;
};

// Fixed-point iteration on P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA,
// K = -(R + B'PB)^{-1} B'PA. Q >= 0, R > 0, (A, B) stabilizable.
RiccatiResult solve_discrete_riccati(const Matrix& A, const Matrix& B,
                                     const Matrix& Q, const Matrix& R,
                                     double tol = 1e-12, int max_iter = 10000);

} // namespace swmpc
