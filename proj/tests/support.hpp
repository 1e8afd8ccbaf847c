#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vprom/fom/simulate.hpp"
#include "vprom/io/config.hpp"

namespace vprom::oracle {

/// Largest principal angle via the projector residual, accurate for small
/// angles: sin(theta_max) = || (I - Qa Qa^T) Qb ||_2.
inline double subspace_angle(const Matrix& a, const Matrix& b) {
  const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(a.rows(), a.cols());
  const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
  const Matrix res = qb - qa * (qa.transpose() * qb);
  Eigen::JacobiSVD<Matrix> svd(res);
  return std::asin(std::min(1.0, svd.singularValues()(0)));
}

/// Exhaustive NNLS: the optimum is the unconstrained least-squares solution
/// on some support with non-negative entries, so try every support.
inline Vector brute_force_nnls(const Matrix& g, const Vector& b) {
  const auto n = g.cols();
  Vector best = Vector::Zero(n);
  double best_res = b.norm();
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < n; ++j)
      if (mask >> j & 1) cols.push_back(j);
    Matrix sub(g.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = g.col(cols[k]);
    const Vector y = sub.colPivHouseholderQr().solve(b);
    if (y.minCoeff() < 0.0) continue;
    const double res = (sub * y - b).norm();
    if (res < best_res) {
      best_res = res;
      best.setZero();
      for (std::size_t k = 0; k < cols.size(); ++k) best(cols[k]) = y(static_cast<Eigen::Index>(k));
    }
  }
  return best;
}

/// Displacement history of a linear, Rayleigh-damped frame from uncoupled
/// modal recurrences of the trapezoidal (average acceleration) rule. Only
/// the first n_modes modes (ascending frequency) contribute.
inline Matrix modal_response(const Matrix& m, const Matrix& k, const Vector& pattern, std::span<const double> ground,
                             double dt, double a0, double a1, Eigen::Index n_modes = -1) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(k, m);
  const Vector w2 = es.eigenvalues();
  const Matrix phi = es.eigenvectors();  // phi^T M phi = I
  const Eigen::Index n = m.rows();
  if (n_modes < 0) n_modes = n;
  const auto steps = static_cast<Eigen::Index>(ground.size());
  Matrix u = Matrix::Zero(steps, n);
  for (Eigen::Index j = 0; j < n_modes; ++j) {
    const double om2 = w2(j);
    const double c = a0 + a1 * om2;
    const double f = phi.col(j).dot(pattern);
    double x = 0.0, v = 0.0;
    double a = f * ground[0];
    // a_new (1 + c h/2 + om2 h^2/4) = f g - c (v + h/2 a) - om2 (x + h v + h^2/4 a)
    const double h = dt;
    const double lhs = 1.0 + 0.5 * c * h + 0.25 * om2 * h * h;
    for (Eigen::Index i = 1; i < steps; ++i) {
      const double an = (f * ground[static_cast<std::size_t>(i)] - c * (v + 0.5 * h * a) -
                         om2 * (x + h * v + 0.25 * h * h * a)) /
                        lhs;
      const double xn = x + h * v + 0.25 * h * h * (a + an);
      v += 0.5 * h * (a + an);
      x = xn;
      a = an;
      u.row(i) += x * phi.col(j).transpose();
    }
  }
  return u;
}

/// Small frame used by fast tests: 3 stories x 2 DOFs, 1.5 s at 0.005 s.
inline fom::Benchmark tiny_benchmark() {
  fom::ShearFrameLayout layout;
  layout.n_stories = 3;
  layout.dofs_per_story = 2;
  layout.story_mass = 2.0e5;
  layout.rayleigh = fom::RayleighDamping{0.2, 0.002};
  fom::Benchmark bm;
  bm.frame = fom::make_shear_frame(layout);
  bm.link_law.A = 1.0;
  bm.link_law.beta = 10.0;
  bm.link_law.gamma = 10.0;
  bm.link_law.energy_norm = 20.0 * std::pow(bm.link_law.ultimate_z(), 2);
  bm.dt = 0.005;
  bm.duration = 1.5;
  return bm;
}

/// Small pipeline configuration over the tiny frame.
inline io::Config tiny_config() {
  io::Config c = io::desk_preset();
  c.layout.n_stories = 3;
  c.layout.dofs_per_story = 4;
  c.dt = 0.005;
  c.duration = 1.0;
  c.n_train = 6;
  c.n_valid = 2;
  c.r = 3;
  c.r_global = 8;
  c.max_clusters = 3;
  c.cvae.epochs = 60;
  c.cvae.hidden = {8};
  c.uq_draws = 3;
  c.workers = 2;
  return c;
}

/// Fresh, empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("vprom-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace vprom::oracle
