#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "vprom/error.hpp"
#include "vprom/fom/bouc_wen.hpp"
#include "vprom/linalg.hpp"
#include "vprom/rom/rom.hpp"

namespace vprom::ecsw {

/// Stacked per-element reduced forces: column e holds the contribution of
/// element e at every sampled training state; b is the full assembly G 1.
struct EcswSystem {
  Matrix g;
  Vector b;
  std::size_t stride = 1;
  std::size_t n_states = 0;
};

/// Generic construction. element_force(state, e) returns the r-vector
/// contribution of element e at training state `state`.
template <class ElementForce>
EcswSystem build_ecsw_system(std::size_t n_states, std::size_t n_elements, Eigen::Index r, ElementForce&& element_force,
                             std::size_t stride = 1) {
  if (stride == 0) throw ConfigError("build_ecsw_system: stride must be >= 1");
  if (n_elements == 0 || r <= 0) throw ShapeError("build_ecsw_system: empty element set or basis");
  std::vector<std::size_t> picked;
  for (std::size_t s = 0; s < n_states; s += stride) picked.push_back(s);
  if (picked.empty()) throw ShapeError("build_ecsw_system: no training states");
  EcswSystem sys;
  sys.stride = stride;
  sys.n_states = picked.size();
  sys.g.resize(static_cast<Eigen::Index>(picked.size()) * r, static_cast<Eigen::Index>(n_elements));
  for (std::size_t e = 0; e < n_elements; ++e) {
    for (std::size_t i = 0; i < picked.size(); ++i) {
      const Vector f = element_force(picked[i], e);
      if (f.size() != r) throw ShapeError("build_ecsw_system: element force has the wrong length");
      sys.g.block(static_cast<Eigen::Index>(i) * r, static_cast<Eigen::Index>(e), r, 1) = f;
    }
  }
  sys.b = sys.g.rowwise().sum();
  return sys;
}

/// Converged reduced state of a ROM replay: coordinates and link states.
struct TrainingState {
  Vector q;
  std::vector<fom::BoucWenState> links;
};

/// Restoring-force contribution R_e d_e of one link at a reduced state.
inline Vector link_force(const rom::ReducedFrameModel& model, const TrainingState& s, std::size_t e) {
  const auto d = model.kinematics().col(static_cast<Eigen::Index>(e));
  const double du = d.dot(s.q);
  return fom::restoring_force(du, s.links[e], model.links().params[e]) * d;
}

inline EcswSystem build_frame_system(const rom::ReducedFrameModel& model, const std::vector<TrainingState>& states,
                                     std::size_t stride = 5) {
  return build_ecsw_system(
      states.size(), model.frame().links.size(), model.dim(),
      [&](std::size_t s, std::size_t e) { return link_force(model, states[s], e); }, stride);
}

struct NnlsResult {
  Vector x;
  double residual = 0.0;  // ||G x - b||
  double target = 0.0;    // tau ||b||
  bool reached = false;
  std::vector<double> residual_trace;  // after every outer iteration
  int iterations = 0;
};

namespace detail {

inline Vector restricted_ls(const Matrix& g, const Vector& b, const std::vector<Eigen::Index>& set) {
  Matrix a(g.rows(), static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) a.col(static_cast<Eigen::Index>(i)) = g.col(set[i]);
  return a.colPivHouseholderQr().solve(b);
}

inline void assert_nonnegative(const Vector& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) >= 0.0)) throw std::logic_error("sparse_nnls: negative weight produced");
  }
}

// Lawson-Hanson on a (possibly compressed) system, stopping once ||G x - c||^2 + offset2 <= target^2.
inline NnlsResult lawson_hanson(const Matrix& g, const Vector& c, double offset2, double target) {
  const Eigen::Index n = g.cols();
  NnlsResult out;
  out.x = Vector::Zero(n);
  out.target = target;
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  auto full_residual = [&](const Vector& x) { return std::sqrt((g * x - c).squaredNorm() + offset2); };
  out.residual = full_residual(out.x);
  const double scale = g.cwiseAbs().maxCoeff() * std::max(c.cwiseAbs().maxCoeff(), 1e-300);
  const double grad_tol = 10.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(g.rows()) * scale;
  const int max_outer = static_cast<int>(3 * n + 10);
  while (out.residual > target && out.iterations < max_outer) {
    const Vector w = g.transpose() * (c - g * out.x);
    Eigen::Index j = -1;
    double best = grad_tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!passive[static_cast<std::size_t>(i)] && w(i) > best) {
        best = w(i);
        j = i;
      }
    }
    if (j < 0) break;  // KKT conditions hold: x is the NNLS optimum
    passive[static_cast<std::size_t>(j)] = true;
    ++out.iterations;
    for (int inner = 0; inner < 3 * n + 10; ++inner) {
      std::vector<Eigen::Index> set;
      for (Eigen::Index i = 0; i < n; ++i)
        if (passive[static_cast<std::size_t>(i)]) set.push_back(i);
      const Vector s_set = restricted_ls(g, c, set);
      bool feasible = true;
      for (Eigen::Index k = 0; k < s_set.size(); ++k) feasible = feasible && s_set(k) > 0.0;
      if (feasible) {
        out.x.setZero();
        for (std::size_t k = 0; k < set.size(); ++k) out.x(set[k]) = s_set(static_cast<Eigen::Index>(k));
        break;
      }
      double alpha = 1.0;
      for (std::size_t k = 0; k < set.size(); ++k) {
        const double s = s_set(static_cast<Eigen::Index>(k));
        if (s <= 0.0) {
          const double xk = out.x(set[k]);
          alpha = std::min(alpha, xk / (xk - s));
        }
      }
      for (std::size_t k = 0; k < set.size(); ++k) {
        const auto i = set[k];
        out.x(i) += alpha * (s_set(static_cast<Eigen::Index>(k)) - out.x(i));
        if (out.x(i) <= 1e-15 * std::max(1.0, out.x.cwiseAbs().maxCoeff())) {
          out.x(i) = 0.0;
          passive[static_cast<std::size_t>(i)] = false;
        }
      }
    }
    assert_nonnegative(out.x);
    out.residual = full_residual(out.x);
    out.residual_trace.push_back(out.residual);
  }
  out.reached = out.residual <= target;
  return out;
}

}  // namespace detail

/// Active-set non-negative least squares with early termination at
/// ||G x - b|| <= tau ||b||. When the tolerance cannot be met the
/// Lawson-Hanson optimum is returned with reached = false. Tall systems are
/// first compressed to their triangular factor.
inline NnlsResult sparse_nnls(const Matrix& g, const Vector& b, double tau) {
  if (g.rows() != b.size()) throw ShapeError("sparse_nnls: G and b differ in rows");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sparse_nnls: tau must be in (0, 1]");
  const double target = tau * b.norm();
  if (g.rows() > 2 * g.cols()) {
    Eigen::HouseholderQR<Matrix> qr(g);
    const Eigen::Index n = g.cols();
    const Matrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    const Vector qtb = qr.householderQ().adjoint() * b;
    const double offset2 = qtb.tail(qtb.size() - n).squaredNorm();
    NnlsResult res = detail::lawson_hanson(r, qtb.head(n), offset2, target);
    res.residual = (g * res.x - b).norm();
    res.reached = res.residual <= target;
    return res;
  }
  return detail::lawson_hanson(g, b, 0.0, target);
}

/// Concatenate training systems over the same element set row-wise.
inline EcswSystem stack_systems(const std::vector<EcswSystem>& parts) {
  if (parts.empty()) throw ShapeError("stack_systems: no systems");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.g.cols() != parts.front().g.cols()) throw ShapeError("stack_systems: element counts differ");
    rows += p.g.rows();
  }
  EcswSystem out;
  out.stride = parts.front().stride;
  out.g.resize(rows, parts.front().g.cols());
  out.b.resize(rows);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.g.middleRows(off, p.g.rows()) = p.g;
    out.b.segment(off, p.b.size()) = p.b;
    off += p.g.rows();
    out.n_states += p.n_states;
  }
  return out;
}

/// ECSW weights for the system; falls back to unit weights on the full
/// element set when the tolerance is unattainable.
inline rom::EcswWeights solve_weights(const EcswSystem& sys, double tau) {
  const NnlsResult res = sparse_nnls(sys.g, sys.b, tau);
  rom::EcswWeights w;
  w.tau = tau;
  if (!res.reached) return [&] {
    auto u = rom::EcswWeights::unit(static_cast<std::size_t>(sys.g.cols()));
    u.tau = tau;
    return u;
  }();
  for (Eigen::Index e = 0; e < res.x.size(); ++e) {
    if (res.x(e) > 0.0) {
      w.selected.push_back(static_cast<std::size_t>(e));
      w.xi.push_back(res.x(e));
    }
  }
  return w;
}

/// Weighted reduced force sum_e xi_e f_e(q) for a generic element evaluator.
template <class ElementForce>
Vector hyper_force(const rom::EcswWeights& w, Eigen::Index r, ElementForce&& element_force) {
  Vector g = Vector::Zero(r);
  for (std::size_t i = 0; i < w.selected.size(); ++i) g += w.xi[i] * element_force(w.selected[i]);
  return g;
}

/// Stable 64-bit fingerprint of a basis (FNV-1a over the raw doubles), used
/// to tie persisted weights to the basis they were trained for.
inline std::uint64_t basis_hash(const Matrix& v) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  };
  const std::int64_t rows = v.rows(), cols = v.cols();
  mix(&rows, sizeof rows);
  mix(&cols, sizeof cols);
  mix(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  return h;
}

/// Replay the full-assembly ROM in basis v for each training case and
/// collect its converged states.
inline std::vector<TrainingState> collect_states(const fom::Benchmark& bm,
                                                 const std::vector<doe::ParameterSample>& samples, const Matrix& v) {
  std::vector<TrainingState> states;
  for (const auto& s : samples) {
    rom::RomOptions opt;
    opt.reconstruct = false;
    rom::rom_simulate(bm, s, v, std::nullopt, opt,
                      [&](std::size_t, const Vector& q, const std::vector<fom::BoucWenState>& st) {
                        states.push_back({q, st});
                      });
  }
  return states;
}

/// Training system for basis v from full-assembly ROM replays of `samples`,
/// each block evaluated with that sample's own link parameters.
inline EcswSystem build_replay_system(const fom::Benchmark& bm, const std::vector<doe::ParameterSample>& samples,
                                      const Matrix& v, std::size_t stride = 5) {
  std::vector<EcswSystem> parts;
  for (const auto& s : samples) {
    const auto states = collect_states(bm, {s}, v);
    const rom::ReducedFrameModel model(bm.frame, bm.instantiate(s).links, v);
    parts.push_back(build_frame_system(model, states, stride));
  }
  return stack_systems(parts);
}

}  // namespace vprom::ecsw
