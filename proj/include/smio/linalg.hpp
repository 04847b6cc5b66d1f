// Dense linear-algebra helpers shared by every smio module.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace smio {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorCode {
  kInvalidArgument,
  kInvalidSparsity,
  kRankAmbiguity,
  kInfeasible,
  kSynthesisFailure,
  kUnstableOverride,
  kNotReady,
  kDivergence,
  kUnsupported,
  kAllModesEliminated,
  kConfig,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidSparsity: return "invalid-sparsity";
    case ErrorCode::kRankAmbiguity: return "rank-ambiguity";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kSynthesisFailure: return "synthesis-failure";
    case ErrorCode::kUnstableOverride: return "unstable-override";
    case ErrorCode::kNotReady: return "not-ready";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kAllModesEliminated: return "all-modes-eliminated";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Induced 2-norm (largest singular value); 0 for empty matrices.
inline double norm2(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector(0);
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues();
}

/// Smallest of the min(rows, cols) singular values. This is the
/// "non-trivial" least singular value of a wide or tall matrix.
inline double sigma_min(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const Vector s = singular_values(m);
  return s(s.size() - 1);
}

inline double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::kInvalidArgument, "eigenvalue computation failed");
  }
  double r = 0.0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    r = std::max(r, std::abs(es.eigenvalues()(i)));
  }
  return r;
}

inline Matrix identity(Index n) { return Matrix::Identity(n, n); }

/// Vertical concatenation [top; bottom] tolerating empty operands.
inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  const Index cols = top.rows() > 0 ? top.cols() : bottom.cols();
  Matrix out(top.rows() + bottom.rows(), cols);
  if (top.rows() > 0) out.topRows(top.rows()) = top;
  if (bottom.rows() > 0) out.bottomRows(bottom.rows()) = bottom;
  return out;
}

/// Horizontal concatenation [left, right] tolerating empty operands.
inline Matrix hstack(const Matrix& left, const Matrix& right) {
  const Index rows = left.cols() > 0 ? left.rows() : right.rows();
  Matrix out(rows, left.cols() + right.cols());
  if (left.cols() > 0) out.leftCols(left.cols()) = left;
  if (right.cols() > 0) out.rightCols(right.cols()) = right;
  return out;
}

/// Numerical rank with an absolute cutoff.
inline Index rank_with_cutoff(const Vector& sv, double cutoff) {
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++r;
  }
  return r;
}

/// Projector onto the row space of a matrix with orthonormal rows.
inline Matrix row_space_projector(const Matrix& orthonormal_rows) {
  return orthonormal_rows.transpose() * orthonormal_rows;
}

}  // namespace smio
