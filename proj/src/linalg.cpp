#include "swmpc/linalg.hpp"

#include <stdexcept>
#include <unsupported/Eigen/KroneckerProduct>

namespace swmpc {

double spectral_radius(const Matrix& F) {
  if (F.rows() != F.cols()) throw std::invalid_argument("spectral_radius: square matrix required");
  if (F.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(F, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_schur(const Matrix& F, double margin) {
  return spectral_radius(F) < 1.0 - margin;
}

Matrix solve_discrete_lyapunov(const Matrix& F, const Matrix& S) {
  const Eigen::Index n = F.rows();
  if (F.cols() != n || S.rows() != n || S.cols() != n)
    throw std::invalid_argument("solve_discrete_lyapunov: dimension mismatch");
  if (!is_schur(F, 0.0)) throw std::invalid_argument("solve_discrete_lyapunov: F not Schur stable");
  // vec(F' X F) = (F' kron F') vec(X) gives (I - F' kron F') vec(X) = vec(S).
  Matrix Ft = F.transpose();
  Matrix M = Matrix::Identity(n * n, n * n) - Eigen::kroneckerProduct(Ft, Ft);
  Vector vecS(Eigen::Map<const Vector>(S.data(), n * n));
  Vector vecX = M.fullPivLu().solve(vecS);
  Matrix X(Eigen::Map<const Matrix>(vecX.data(), n, n));
  return 0.5 * (X + X.transpose());
}

RiccatiResult solve_discrete_riccati(const Matrix& A, const Matrix& B,
                                     const Matrix& Q, const Matrix& R,
                                     double tol, int max_iter) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != m || R.cols() != m)
    throw std::invalid_argument("solve_discrete_riccati: dimension mismatch");

  RiccatiResult out;
  Matrix P = Q;
  for (int it = 0; it < max_iter; ++it) {
    Matrix G = R + B.transpose() * P * B;
    Matrix Ginv = G.ldlt().solve(Matrix::Identity(m, m));
    Matrix Pn = Q + A.transpose() * P * A -
                A.transpose() * P * B * Ginv * B.transpose() * P * A;
    Pn = 0.5 * (Pn + Pn.transpose());
    double diff = (Pn - P).cwiseAbs().maxCoeff();
    double scale = 1.0 + P.cwiseAbs().maxCoeff();
    P = Pn;
    out.iterations = it + 1;
    if (diff <= tol * scale) {
      out.converged = true;
      break;
    }
  }
  Matrix G = R + B.transpose() * P * B;
  out.K = -G.ldlt().solve(B.transpose() * P * A);
  out.P = P;
  return out;
}

} // namespace swmpc
