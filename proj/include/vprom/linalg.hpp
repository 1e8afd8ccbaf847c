#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "vprom/error.hpp"

namespace vprom {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest absolute entry of V^T V - I.
inline double orthonormality_defect(const Matrix& v) {
  if (v.cols() == 0) return 0.0;
  const Matrix gram = v.transpose() * v;
  return (gram - Matrix::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff();
}

/// Thin QR factor with the sign convention diag(R) >= 0, so that columns keep
/// their orientation (equivalent to Gram-Schmidt on the input columns).
inline Matrix orthonormalize_qr(const Matrix& a) {
  const auto m = a.rows();
  const auto n = a.cols();
  if (n > m) throw ShapeError("orthonormalize_qr: more columns than rows");
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(m, n);
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

/// Closest matrix with orthonormal columns in the Frobenius sense (U W^T of the thin SVD).
inline Matrix polar_orthonormalize(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Principal angles (ascending, radians) between span(a) and span(b).
/// Both inputs must have orthonormal columns and the same column count.
/// Small angles come from the sines and large ones from the cosines, so
/// angles near zero are resolved to roughly machine precision.
inline std::vector<double> principal_angles(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("principal_angles: subspace shapes differ");
  }
  const auto k = a.cols();
  const Matrix cross = a.transpose() * b;
  Eigen::JacobiSVD<Matrix> cos_svd(cross);
  const Matrix residual = b - a * cross;
  Eigen::JacobiSVD<Matrix> sin_svd(residual);
  // cosines descending pair with sines ascending
  Vector cosines = cos_svd.singularValues();
  Vector sines = sin_svd.singularValues();
  std::vector<double> angles(static_cast<size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    const double c = std::clamp(cosines(i), 0.0, 1.0);
    const double s = std::clamp(sines(k - 1 - i), 0.0, 1.0);
    angles[static_cast<size_t>(i)] = std::atan2(s, c);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

inline double max_principal_angle(const Matrix& a, const Matrix& b) {
  const auto angles = principal_angles(a, b);
  return angles.empty() ? 0.0 : angles.back();
}

}  // namespace vprom
