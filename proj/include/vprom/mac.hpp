#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "vprom/doe.hpp"
#include "vprom/error.hpp"
#include "vprom/linalg.hpp"
#include "vprom/rom/reduction.hpp"

namespace vprom::mac {

/// Modal assurance criterion |a.b|^2 / (|a|^2 |b|^2).
inline double mac(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("mac: vector lengths differ");
  const double aa = a.squaredNorm();
  const double bb = b.squaredNorm();
  if (aa == 0.0 || bb == 0.0) throw RangeError("mac: zero vector");
  const double ab = a.dot(b);
  return std::clamp(ab * ab / (aa * bb), 0.0, 1.0);
}

/// Mean MAC of corresponding columns.
inline double basis_similarity(const Matrix& va, const Matrix& vb) {
  if (va.cols() != vb.cols() || va.rows() != vb.rows()) throw ShapeError("basis_similarity: bases differ in shape");
  if (va.cols() == 0) throw ShapeError("basis_similarity: empty basis");
  double s = 0.0;
  for (Eigen::Index j = 0; j < va.cols(); ++j) s += mac(va.col(j), vb.col(j));
  return s / static_cast<double>(va.cols());
}

struct TrainingBasis {
  doe::ParameterSample sample;
  Matrix basis;
};

struct ClusterLibrary {
  std::vector<std::size_t> centers;      // training index of each cluster center
  std::vector<std::size_t> assignments;  // cluster of each training sample
  std::vector<double> similarity;        // similarity of each sample to its center
  double mac_tolerance = 0.1;
  std::size_t max_clusters = 8;

  std::size_t n_clusters() const { return centers.size(); }
  double min_similarity() const {
    return similarity.empty() ? 1.0 : *std::min_element(similarity.begin(), similarity.end());
  }
};

struct ClusterOptions {
  double mac_tolerance = 0.1;
  std::size_t max_clusters = 8;
  /// Called with (center, worst member) before the worst member is promoted.
  /// It may append new training pairs, e.g. FOM runs between the two.
  std::function<void(std::size_t, std::size_t, std::vector<TrainingBasis>&)> refine;
};

namespace detail {

inline std::size_t nearest_to_centroid(const std::vector<TrainingBasis>& training) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < training.size(); ++i) {
    double d = 0.0;
    for (double v : training[i].sample.normalized) d += v * v;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline void assign(const std::vector<TrainingBasis>& training, ClusterLibrary& lib) {
  const std::size_t n = training.size();
  lib.assignments.assign(n, 0);
  lib.similarity.assign(n, -1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < lib.centers.size(); ++c) {
      const std::size_t k = lib.centers[c];
      const double s = (i == k) ? 1.0 : basis_similarity(training[i].basis, training[k].basis);
      if (s > lib.similarity[i]) {
        lib.similarity[i] = s;
        lib.assignments[i] = c;
      }
    }
  }
  // A center always belongs to its own cluster, even if another center is
  // an exact duplicate.
  for (std::size_t c = 0; c < lib.centers.size(); ++c) {
    lib.assignments[lib.centers[c]] = c;
    lib.similarity[lib.centers[c]] = 1.0;
  }
}

}  // namespace detail

/// Greedy MAC clustering: start from the sample nearest the domain centre,
/// assign every basis to its most similar centre and promote the worst
/// assigned basis to a new centre until all similarities reach
/// 1 - mac_tolerance or the cluster cap binds.
inline ClusterLibrary adaptive_cluster(std::vector<TrainingBasis>& training, const ClusterOptions& opt = {}) {
  if (training.empty()) throw ShapeError("adaptive_cluster: no training bases");
  if (!(opt.mac_tolerance > 0.0 && opt.mac_tolerance < 1.0)) throw ConfigError("adaptive_cluster: tolerance must be in (0,1)");
  if (opt.max_clusters < 1) throw ConfigError("adaptive_cluster: max_clusters must be >= 1");
  ClusterLibrary lib;
  lib.mac_tolerance = opt.mac_tolerance;
  lib.max_clusters = opt.max_clusters;
  lib.centers.push_back(detail::nearest_to_centroid(training));
  detail::assign(training, lib);
  while (lib.centers.size() < opt.max_clusters) {
    const auto worst = static_cast<std::size_t>(
        std::min_element(lib.similarity.begin(), lib.similarity.end()) - lib.similarity.begin());
    if (lib.similarity[worst] >= 1.0 - opt.mac_tolerance) break;
    if (opt.refine) {
      const std::size_t before = training.size();
      opt.refine(lib.centers[lib.assignments[worst]], worst, training);
      if (training.size() != before) {
        detail::assign(training, lib);
        continue;
      }
    }
    lib.centers.push_back(worst);
    detail::assign(training, lib);
  }
  return lib;
}

inline ClusterLibrary adaptive_cluster(const std::vector<TrainingBasis>& training, double mac_tolerance,
                                       std::size_t max_clusters) {
  std::vector<TrainingBasis> copy = training;
  ClusterOptions opt;
  opt.mac_tolerance = mac_tolerance;
  opt.max_clusters = max_clusters;
  return adaptive_cluster(copy, opt);
}

/// k-NN majority vote in normalized parameter space. Ties go to the tied
/// cluster that owns the nearest neighbour.
inline std::size_t select_cluster(const ClusterLibrary& lib, const std::vector<Vector>& train_points,
                                  const Vector& query, std::size_t k = 3) {
  if (lib.centers.empty() || train_points.empty()) throw ShapeError("select_cluster: empty library");
  if (train_points.size() != lib.assignments.size()) throw ShapeError("select_cluster: points and assignments differ");
  if (k == 0) throw ConfigError("select_cluster: k must be >= 1");
  k = std::min(k, train_points.size());
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(train_points.size());
  for (std::size_t i = 0; i < train_points.size(); ++i) d.emplace_back((train_points[i] - query).squaredNorm(), i);
  std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::size_t> votes(lib.n_clusters(), 0);
  for (std::size_t i = 0; i < k; ++i) ++votes[lib.assignments[d[i].second]];
  const std::size_t top = *std::max_element(votes.begin(), votes.end());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t c = lib.assignments[d[i].second];
    if (votes[c] == top) return c;
  }
  return lib.assignments[d.front().second];
}

inline std::vector<Vector> normalized_points(const std::vector<TrainingBasis>& training) {
  std::vector<Vector> pts;
  pts.reserve(training.size());
  for (const auto& t : training) {
    pts.push_back(Eigen::Map<const Vector>(t.sample.normalized.data(),
                                           static_cast<Eigen::Index>(t.sample.normalized.size())));
  }
  return pts;
}

}  // namespace vprom::mac
