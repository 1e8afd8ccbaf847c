#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vprom/doe.hpp"
#include "vprom/error.hpp"
#include "vprom/linalg.hpp"
#include "vprom/rom/reduction.hpp"

namespace vprom::cprom {

struct TangentImage {
  Matrix gamma;  // r_global x r
  std::size_t reference_index = 0;
};

/// Logarithm of span(x) at span(x_ref): with (I - x_ref x_ref^T) x (x_ref^T x)^-1 = P S Q^T,
/// Gamma = P atan(S) Q^T. Depends only on the subspace spanned by x.
inline Matrix grassmann_log(const Matrix& x_ref, const Matrix& x) {
  if (x_ref.rows() != x.rows() || x_ref.cols() != x.cols()) throw ShapeError("grassmann_log: shapes differ");
  const Matrix a = polar_orthonormalize(x_ref);
  const Matrix b = polar_orthonormalize(x);
  const Matrix m = a.transpose() * b;
  Eigen::JacobiSVD<Matrix> msvd(m);
  const Vector cosines = msvd.singularValues();
  if (cosines.size() == 0 || cosines.minCoeff() < 1e-10) {
    throw RangeError("grassmann_log: subspaces are (nearly) orthogonal; choose a closer reference point");
  }
  const Matrix l = (b - a * m) * m.inverse();
  Eigen::JacobiSVD<Matrix> svd(l, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = svd.singularValues().array().atan().matrix();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

/// Exponential map at x_ref: with Gamma = P S Q^T,
/// X = x_ref Q cos(S) Q^T + P sin(S) Q^T, so that exp(0) = x_ref.
inline Matrix grassmann_exp(const Matrix& x_ref, const Matrix& gamma) {
  if (x_ref.rows() != gamma.rows() || x_ref.cols() != gamma.cols()) throw ShapeError("grassmann_exp: shapes differ");
  const Matrix a = polar_orthonormalize(x_ref);
  Eigen::JacobiSVD<Matrix> svd(gamma, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = svd.singularValues();
  const Matrix& q = svd.matrixV();
  const Vector c = s.array().cos().matrix();
  const Vector sn = s.array().sin().matrix();
  const Matrix x = a * q * c.asDiagonal() * q.transpose() + svd.matrixU() * sn.asDiagonal() * q.transpose();
  return polar_orthonormalize(x);
}

/// Flip columns of x whose correlation with the matching reference column is negative.
inline Matrix align_signs(const Matrix& x_ref, Matrix x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (x_ref.col(j).dot(x.col(j)) < 0.0) x.col(j) *= -1.0;
  }
  return x;
}

struct TrainingCoefficients {
  doe::ParameterSample sample;
  Matrix x;  // r_global x r
};

struct InterpolationOptions {
  std::size_t k_int = 0;        // 0: max(4, dim + 2)
  double exponent = 2.0;        // inverse-distance weight exponent
  double slope_ridge = 1e-3;    // relative ridge on the local gradient
  double exact_hit = 1e-12;
};

struct InterpolationResult {
  rom::ReductionBasis basis;
  Matrix x;  // interpolated coefficient matrix, orthonormal
  std::size_t reference_index = 0;
  std::vector<std::size_t> neighbours;
};

namespace detail {

inline Vector as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

/// Interpolate a coefficient matrix at p_query on the tangent space of the
/// nearest training sample. Tangent images of the k_int nearest samples are
/// combined element-wise by an inverse-distance-weighted local affine fit,
/// which reproduces the images exactly when they vary linearly in p and
/// reduces to plain inverse-distance weighting as the ridge grows.
inline InterpolationResult interpolate_coefficients(const std::vector<TrainingCoefficients>& training,
                                                    const std::vector<double>& p_query_normalized,
                                                    const InterpolationOptions& opt = {}) {
  if (training.size() < 2) throw ShapeError("interpolate_basis: at least two training samples required");
  const Vector pq = detail::as_vector(p_query_normalized);
  const auto dim = pq.size();
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < training.size(); ++i) {
    const Vector pi = detail::as_vector(training[i].sample.normalized);
    if (pi.size() != dim) throw ShapeError("interpolate_basis: parameter dimensions differ");
    d.emplace_back((pi - pq).norm(), i);
  }
  std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  InterpolationResult out;
  out.reference_index = d.front().second;
  const Matrix x_ref = polar_orthonormalize(training[out.reference_index].x);
  if (d.front().first < opt.exact_hit) {
    out.x = x_ref;
    out.neighbours = {out.reference_index};
    return out;
  }
  std::size_t k = opt.k_int ? opt.k_int : std::max<std::size_t>(4, static_cast<std::size_t>(dim) + 2);
  k = std::min(k, training.size());

  // Weighted least squares for [c; B] in Gamma(p) ~ c + B^T (p - pq), per entry.
  const Eigen::Index m = dim + 1;
  Matrix normal = Matrix::Zero(m, m);
  std::vector<Matrix> gammas;
  std::vector<Vector> rows;
  std::vector<double> weights;
  for (std::size_t i = 0; i < k; ++i) {
    const auto idx = d[i].second;
    out.neighbours.push_back(idx);
    const Matrix xi = align_signs(x_ref, polar_orthonormalize(training[idx].x));
    gammas.push_back(grassmann_log(x_ref, xi));
    Vector row(m);
    row(0) = 1.0;
    row.tail(dim) = detail::as_vector(training[idx].sample.normalized) - pq;
    const double w = 1.0 / std::pow(d[i].first, opt.exponent);
    rows.push_back(row);
    weights.push_back(w);
    normal.noalias() += w * row * row.transpose();
  }
  // Ridge scaled by the weighted spread keeps the slope bounded when the
  // neighbours do not span the parameter space.
  double spread = 0.0;
  for (std::size_t i = 0; i < k; ++i) spread += weights[i] * rows[i].tail(dim).squaredNorm();
  const double lambda = opt.slope_ridge * spread / static_cast<double>(std::max<Eigen::Index>(dim, 1));
  for (Eigen::Index j = 1; j < m; ++j) normal(j, j) += lambda;
  const Eigen::LDLT<Matrix> ldlt(normal);
  // Only the intercept is needed: c = e0^T N^-1 sum w_i row_i Gamma_i.
  Vector e0 = Vector::Zero(m);
  e0(0) = 1.0;
  const Vector h = ldlt.solve(e0);
  Matrix gamma = Matrix::Zero(x_ref.rows(), x_ref.cols());
  for (std::size_t i = 0; i < k; ++i) gamma += (weights[i] * rows[i].dot(h)) * gammas[i];
  out.x = grassmann_exp(x_ref, gamma);
  return out;
}

inline InterpolationResult interpolate_basis(const std::vector<TrainingCoefficients>& training,
                                             const Matrix& v_global, const std::vector<double>& p_query_normalized,
                                             const InterpolationOptions& opt = {}) {
  InterpolationResult r = interpolate_coefficients(training, p_query_normalized, opt);
  if (v_global.cols() != r.x.rows()) throw ShapeError("interpolate_basis: global basis and coefficients differ");
  r.basis.modes = orthonormalize_qr(v_global * r.x);
  return r;
}

}  // namespace vprom::cprom
