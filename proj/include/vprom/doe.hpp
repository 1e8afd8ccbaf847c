#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "vprom/error.hpp"

namespace vprom::doe {

/// Box-shaped parameter domain with named axes.
struct ParameterDomain {
  std::vector<std::string> names;
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t dim() const { return names.size(); }

  void validate() const {
    if (names.empty()) throw ConfigError("ParameterDomain: no parameters");
    if (lower.size() != names.size() || upper.size() != names.size()) {
      throw ConfigError("ParameterDomain: bounds and names differ in length");
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!seen.insert(names[i]).second) throw ConfigError("ParameterDomain: duplicate name '" + names[i] + "'");
      if (!(lower[i] < upper[i])) {
        throw ConfigError("ParameterDomain: lower bound of '" + names[i] + "' is not below its upper bound");
      }
    }
  }

  std::size_t index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("ParameterDomain: unknown parameter '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
};

/// Parameters of the hysteretic frame benchmark and their default ranges.
inline ParameterDomain benchmark_domain() {
  return {{"alpha", "k", "amp", "f_but", "E", "delta_eta"},
          {0.25, 0.8e8, 1.5e6, 5.0, 185e9, 0.25},
          {0.50, 1.2e8, 3.0e6, 15.0, 235e9, 0.75}};
}

struct ParameterSample {
  std::vector<double> values;
  std::vector<double> normalized;
};

/// Affine map of in-bounds values onto [-1, 1].
inline std::vector<double> normalize(const ParameterDomain& domain, const std::vector<double>& values) {
  if (values.size() != domain.dim()) throw ShapeError("normalize: value count does not match the domain");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double lo = domain.lower[i];
    const double hi = domain.upper[i];
    if (!(values[i] >= lo && values[i] <= hi)) {
      throw RangeError("normalize: value " + std::to_string(values[i]) + " of '" + domain.names[i] +
                       "' lies outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    out[i] = 2.0 * (values[i] - lo) / (hi - lo) - 1.0;
  }
  return out;
}

inline std::vector<double> denormalize(const ParameterDomain& domain, const std::vector<double>& normalized) {
  if (normalized.size() != domain.dim()) throw ShapeError("denormalize: value count does not match the domain");
  std::vector<double> out(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    if (!(normalized[i] >= -1.0 && normalized[i] <= 1.0)) {
      throw RangeError("denormalize: normalized value of '" + domain.names[i] + "' lies outside [-1, 1]");
    }
    out[i] = domain.lower[i] + 0.5 * (normalized[i] + 1.0) * (domain.upper[i] - domain.lower[i]);
  }
  return out;
}

inline ParameterSample make_sample(const ParameterDomain& domain, std::vector<double> values) {
  ParameterSample s;
  s.normalized = normalize(domain, values);
  s.values = std::move(values);
  return s;
}

/// Latin hypercube design: every dimension is split into n equiprobable
/// strata, each holding exactly one sample placed uniformly inside it.
inline std::vector<ParameterSample> lhs_sample(const ParameterDomain& domain, std::size_t n, std::uint64_t seed) {
  domain.validate();
  if (n < 1) throw RangeError("lhs_sample: n must be >= 1");
  const std::size_t k = domain.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> unit_cube(n, std::vector<double>(k));
  std::vector<std::size_t> perm(n);
  for (std::size_t d = 0; d < k; ++d) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // Fisher-Yates with the engine directly, so the design does not depend on
    // the standard library's shuffle implementation
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(perm[i - 1], perm[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double u = (static_cast<double>(perm[i]) + unit(rng)) / static_cast<double>(n);
      const double stratum_hi = static_cast<double>(perm[i] + 1) / static_cast<double>(n);
      u = std::min(u, std::nextafter(stratum_hi, 0.0));
      unit_cube[i][d] = u;
    }
  }
  std::vector<ParameterSample> out;
  out.reserve(n);
  for (const auto& row : unit_cube) {
    std::vector<double> values(k);
    for (std::size_t d = 0; d < k; ++d) {
      values[d] = domain.lower[d] + row[d] * (domain.upper[d] - domain.lower[d]);
      values[d] = std::clamp(values[d], domain.lower[d], domain.upper[d]);
    }
    out.push_back(make_sample(domain, std::move(values)));
  }
  return out;
}

}  // namespace vprom::doe
