// Discrete algebraic Riccati equation via structure-preserving doubling.
#pragma once

#include "smio/linalg.hpp"

namespace smio {

/// Stabilizing solution X of
///   X = A'XA - A'XB (R + B'XB)^{-1} B'XA + Q
/// using the doubling iteration. Q must be symmetric positive semidefinite and
/// R symmetric positive definite. Throws kSynthesisFailure if the iteration
/// does not converge (e.g. (A, B) not stabilizable).
inline Matrix solve_dare(const Matrix& A, const Matrix& B, const Matrix& Q,
                         const Matrix& R, int max_iter = 200,
                         double tol = 1e-13) {
  const Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "solve_dare: dimension mismatch");
  }
  if (n == 0) return Matrix(0, 0);

  Matrix Ak = A;
  Matrix Gk = Matrix::Zero(n, n);
  if (B.cols() > 0) Gk = B * R.ldlt().solve(B.transpose());
  Matrix Hk = Q;
  const Matrix I = identity(n);

  for (int iter = 0; iter < max_iter; ++iter) {
    Eigen::PartialPivLU<Matrix> W(I + Gk * Hk);
    const Matrix WA = W.solve(Ak);
    const Matrix WG = W.solve(Gk);
    Matrix H_next = Hk + Ak.transpose() * Hk * WA;
    Matrix G_next = Gk + Ak * WG * Ak.transpose();
    Matrix A_next = Ak * WA;
    H_next = 0.5 * (H_next + H_next.transpose());
    G_next = 0.5 * (G_next + G_next.transpose());
    if (!H_next.allFinite()) break;
    const double change = (H_next - Hk).norm();
    Hk = std::move(H_next);
    Gk = std::move(G_next);
    Ak = std::move(A_next);
    if (change <= tol * std::max(1.0, Hk.norm())) return Hk;
  }
  throw Error(ErrorCode::kSynthesisFailure,
              "Riccati doubling iteration did not converge");
}

}  // namespace smio
