#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "vprom/doe.hpp"
#include "vprom/error.hpp"
#include "vprom/linalg.hpp"

namespace vprom::metrics {

/// Rows (time steps) and columns (DOFs) over which an error is measured.
/// Empty DOF list means all DOFs; empty step list means every step after
/// the first settle_fraction of the history.
struct Selection {
  std::vector<Eigen::Index> dofs;
  std::vector<Eigen::Index> steps;
  double settle_fraction = 0.01;

  std::vector<Eigen::Index> resolve_steps(Eigen::Index n_steps) const {
    if (!steps.empty()) return steps;
    const auto first = static_cast<Eigen::Index>(std::floor(settle_fraction * static_cast<double>(n_steps)));
    std::vector<Eigen::Index> out;
    for (Eigen::Index t = first; t < n_steps; ++t) out.push_back(t);
    return out;
  }

  std::vector<Eigen::Index> resolve_dofs(Eigen::Index n_dofs) const {
    if (!dofs.empty()) return dofs;
    std::vector<Eigen::Index> out(static_cast<std::size_t>(n_dofs));
    for (Eigen::Index j = 0; j < n_dofs; ++j) out[static_cast<std::size_t>(j)] = j;
    return out;
  }
};

/// Relative Frobenius error in percent over the selected DOFs and steps.
inline double err_q(const Matrix& reference, const Matrix& approx, const Selection& sel = {}) {
  if (reference.rows() != approx.rows() || reference.cols() != approx.cols()) {
    throw ShapeError("err_q: fields differ in shape");
  }
  const auto steps = sel.resolve_steps(reference.rows());
  const auto dofs = sel.resolve_dofs(reference.cols());
  if (steps.empty() || dofs.empty()) throw ShapeError("err_q: empty DOF or time selection");
  double num = 0.0;
  double den = 0.0;
  for (auto t : steps) {
    if (t < 0 || t >= reference.rows()) throw RangeError("err_q: step index out of range");
    for (auto j : dofs) {
      if (j < 0 || j >= reference.cols()) throw RangeError("err_q: DOF index out of range");
      const double q = reference(t, j);
      const double e = q - approx(t, j);
      num += e * e;
      den += q * q;
    }
  }
  if (den == 0.0) throw RangeError("err_q: reference field has zero norm on the selection");
  return 100.0 * std::sqrt(num / den);
}

struct ErrorRecord {
  std::size_t sample_index = 0;
  doe::ParameterSample sample;
  std::string strategy;
  double err_u = 0.0;
  double err_udot = 0.0;
  double err_uddot = 0.0;
  double wall_time_fom = 0.0;
  double wall_time_rom = 0.0;
  bool failed = false;

  double speed_up() const { return wall_time_rom > 0.0 ? wall_time_fom / wall_time_rom : 0.0; }
};

struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> outliers;
};

namespace detail {
// Linear interpolation between order statistics (the common "type 7" rule).
inline double quantile_sorted(const std::vector<double>& v, double p) {
  if (v.size() == 1) return v.front();
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double lv = v[lo];
  const double hv = v[hi];
  if (!std::isfinite(lv) || !std::isfinite(hv)) return h - static_cast<double>(lo) > 0.0 ? hv : lv;
  return lv + (h - static_cast<double>(lo)) * (hv - lv);
}
}  // namespace detail

inline BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw ShapeError("box_stats: no values");
  std::sort(values.begin(), values.end());
  BoxStats s;
  s.min = values.front();
  s.max = values.back();
  s.median = detail::quantile_sorted(values, 0.5);
  s.q1 = detail::quantile_sorted(values, 0.25);
  s.q3 = detail::quantile_sorted(values, 0.75);
  const double iqr = s.q3 - s.q1;
  for (double v : values) {
    if (v < s.q1 - 1.5 * iqr || v > s.q3 + 1.5 * iqr) s.outliers.push_back(v);
  }
  return s;
}

struct StrategySummary {
  std::string strategy;
  std::size_t n_records = 0;
  std::size_t n_failed = 0;
  BoxStats err_u;
  BoxStats err_udot;
  BoxStats err_uddot;
  double mean_speed_up = 0.0;
  double mean_wall_time_fom = 0.0;
  double mean_wall_time_rom = 0.0;
};

/// Per-strategy statistics. Failed ROM runs enter the error statistics as
/// infinite error and are excluded from the timing averages.
inline std::vector<StrategySummary> summarize(const std::vector<ErrorRecord>& records) {
  if (records.empty()) throw ShapeError("summarize: no records");
  std::map<std::string, std::vector<const ErrorRecord*>> by;
  for (const auto& r : records) by[r.strategy].push_back(&r);
  std::vector<StrategySummary> out;
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& [name, recs] : by) {
    StrategySummary s;
    s.strategy = name;
    s.n_records = recs.size();
    std::vector<double> eu, ev, ea;
    double tf = 0.0, tr = 0.0;
    std::size_t timed = 0;
    for (const auto* r : recs) {
      if (r->failed) {
        ++s.n_failed;
        eu.push_back(inf);
        ev.push_back(inf);
        ea.push_back(inf);
        continue;
      }
      eu.push_back(r->err_u);
      ev.push_back(r->err_udot);
      ea.push_back(r->err_uddot);
      tf += r->wall_time_fom;
      tr += r->wall_time_rom;
      ++timed;
    }
    s.err_u = box_stats(eu);
    s.err_udot = box_stats(ev);
    s.err_uddot = box_stats(ea);
    if (timed > 0) {
      s.mean_wall_time_fom = tf / static_cast<double>(timed);
      s.mean_wall_time_rom = tr / static_cast<double>(timed);
      s.mean_speed_up = s.mean_wall_time_rom > 0.0 ? s.mean_wall_time_fom / s.mean_wall_time_rom : 0.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct ErrorMapRow {
  double x = 0.0;
  double y = 0.0;
  double err_u = 0.0;  // raw
  double color = 0.0;  // clipped
};

inline constexpr double kErrorMapClip = 20.0;

/// Scatter of err_u over two parameter axes; the color channel is clipped
/// at 20 % while the raw value is kept.
inline std::vector<ErrorMapRow> error_map(const std::vector<ErrorRecord>& records, const doe::ParameterDomain& domain,
                                          const std::string& axis_x, const std::string& axis_y,
                                          const std::string& strategy = {}) {
  const auto ix = domain.index_of(axis_x);
  const auto iy = domain.index_of(axis_y);
  std::vector<ErrorMapRow> rows;
  for (const auto& r : records) {
    if (!strategy.empty() && r.strategy != strategy) continue;
    const double e = r.failed ? std::numeric_limits<double>::infinity() : r.err_u;
    rows.push_back({r.sample.values.at(ix), r.sample.values.at(iy), e, std::min(e, kErrorMapClip)});
  }
  return rows;
}

inline void write_error_map_csv(std::ostream& os, const std::vector<ErrorMapRow>& rows, const std::string& axis_x,
                                const std::string& axis_y) {
  os << axis_x << ',' << axis_y << ",err_u,color\n";
  os.precision(17);
  for (const auto& r : rows) os << r.x << ',' << r.y << ',' << r.err_u << ',' << r.color << '\n';
}

}  // namespace vprom::metrics
