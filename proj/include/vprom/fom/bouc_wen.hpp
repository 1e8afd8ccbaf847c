#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vprom/error.hpp"

namespace vprom::fom {

/// Parameters of one Bouc-Wen link with strength deterioration and
/// stiffness degradation driven by the absorbed hysteretic energy.
struct BoucWenParams {
  double alpha = 0.5;  // post-yield to elastic stiffness ratio
  double k = 1.0;      // stiffness coefficient [N/m]
  double A = 1.0;
  double beta = 0.5;
  double gamma = 0.5;
  double w = 1.0;
  double delta_nu = 0.0;
  double delta_eta = 0.0;
  // The energy rate is z * du_dot / energy_norm. With energy_norm = 1 the
  // energy carries units of m^2; a benchmark usually sets it to the squared
  // ultimate hysteretic displacement so the degradation coefficients act on
  // a dimensionless quantity.
  double energy_norm = 1.0;

  void validate() const {
    std::ostringstream msg;
    if (!(alpha >= 0.0 && alpha <= 1.0)) msg << "alpha must lie in [0,1]; ";
    if (!(k > 0.0)) msg << "k must be positive; ";
    if (!(w >= 1.0)) msg << "w must be >= 1; ";
    if (alpha < 1.0 && !(beta + gamma > 0.0)) msg << "beta + gamma must be positive; ";
    if (!(energy_norm > 0.0)) msg << "energy_norm must be positive; ";
    if (!msg.str().empty()) throw ConfigError("BoucWenParams: " + msg.str());
  }

  /// Bounded value |z| approaches under monotone loading without degradation.
  double ultimate_z() const { return std::pow(A / (beta + gamma), 1.0 / w); }
};

struct BoucWenState {
  double z = 0.0;
  double eps_energy = 0.0;
  double nu = 1.0;
  double eta_deg = 1.0;
};

struct BoucWenRates {
  double z_dot = 0.0;
  double eps_dot = 0.0;
};

inline BoucWenState state_from_energy(double z, double eps, const BoucWenParams& p) {
  return {z, eps, 1.0 + p.delta_nu * eps, 1.0 + p.delta_eta * eps};
}

/// Rate form of the hysteresis law:
///   z_dot = [A du_dot - nu (beta |du_dot| z |z|^(w-1) + gamma du_dot |z|^w)] / eta
inline BoucWenRates boucwen_rate(const BoucWenState& s, double du_dot, const BoucWenParams& p) {
  if (!(s.eta_deg > 0.0)) {
    throw RangeError("boucwen_rate: stiffness degradation factor eta <= 0 (runaway degradation)");
  }
  const double az = std::abs(s.z);
  const double zw1 = p.w == 1.0 ? 1.0 : std::pow(az, p.w - 1.0);
  const double hyst = p.beta * std::abs(du_dot) * s.z * zw1 + p.gamma * du_dot * az * zw1;
  BoucWenRates r;
  r.z_dot = (p.A * du_dot - s.nu * hyst) / s.eta_deg;
  r.eps_dot = s.z * du_dot / p.energy_norm;
  return r;
}

/// R = alpha k du + (1 - alpha) k z
inline double restoring_force(double du, const BoucWenState& s, const BoucWenParams& p) {
  return p.alpha * p.k * du + (1.0 - p.alpha) * p.k * s.z;
}

struct LinkUpdate {
  BoucWenState state;
  double dz_ddu = 0.0;  // consistent derivative of the updated z w.r.t. the increment
};

namespace detail {

// One backward-Euler substep in the rate-independent form
//   eta(eps1) (z1 - z0) = A d - nu(eps1) (beta |d| z1 |z1|^(w-1) + gamma d |z1|^w)
//   eps1 = eps0 + z1 d / energy_norm
// Returns false when the scalar Newton iteration does not converge.
struct Substep {
  double z = 0.0;
  double eps = 0.0;
  double dz_dz0 = 0.0;
  double dz_deps0 = 0.0;
  double dz_dd = 0.0;
};

inline bool backward_euler_substep(double z0, double eps0, double d, const BoucWenParams& p,
                                   Substep& out) {
  const double en = p.energy_norm;
  const double ad = std::abs(d);
  const double sd = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);

  auto hyst_terms = [&](double z, double& h, double& dh_dz, double& dh_dd) {
    const double az = std::abs(z);
    const double sz = z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
    const double zw1 = p.w == 1.0 ? 1.0 : std::pow(az, p.w - 1.0);
    const double zw = az * zw1;
    h = p.beta * ad * z * zw1 + p.gamma * d * zw;
    dh_dz = p.w * zw1 * (p.beta * ad + p.gamma * d * sz);
    dh_dd = p.beta * sd * z * zw1 + p.gamma * zw;
  };

  const double eta0 = 1.0 + p.delta_eta * eps0;
  double z = z0 + p.A * d / std::max(eta0, 1e-12);
  const double scale = std::max({std::abs(z0), std::abs(p.A * d), 1e-300});
  for (int it = 0; it < 60; ++it) {
    const double eps = eps0 + z * d / en;
    const double nu = 1.0 + p.delta_nu * eps;
    const double eta = 1.0 + p.delta_eta * eps;
    double h, dh_dz, dh_dd;
    hyst_terms(z, h, dh_dz, dh_dd);
    const double f = eta * (z - z0) - (p.A * d - nu * h);
    const double df = p.delta_eta * d / en * (z - z0) + eta + p.delta_nu * d / en * h + nu * dh_dz;
    if (!(df != 0.0) || !std::isfinite(df)) return false;
    double step = f / df;
    // keep the iterate from jumping across the origin by more than the scale of the problem
    const double max_step = 4.0 * scale + std::abs(z);
    step = std::clamp(step, -max_step, max_step);
    z -= step;
    if (std::abs(step) <= 1e-14 * std::max(std::abs(z), scale)) {
      const double eps1 = eps0 + z * d / en;
      const double nu1 = 1.0 + p.delta_nu * eps1;
      const double eta1 = 1.0 + p.delta_eta * eps1;
      if (!(eta1 > 0.0)) return false;
      hyst_terms(z, h, dh_dz, dh_dd);
      const double df_dz = p.delta_eta * d / en * (z - z0) + eta1 + p.delta_nu * d / en * h + nu1 * dh_dz;
      // partials of the residual w.r.t. the inputs at fixed z
      const double df_dz0 = -eta1;
      const double df_deps0 = p.delta_eta * (z - z0) + p.delta_nu * h;
      const double df_dd = p.delta_eta * z / en * (z - z0) - p.A + p.delta_nu * z / en * h + nu1 * dh_dd;
      out.z = z;
      out.eps = eps1;
      out.dz_dz0 = -df_dz0 / df_dz;
      out.dz_deps0 = -df_deps0 / df_dz;
      out.dz_dd = -df_dd / df_dz;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Advance a link by a relative-displacement increment using backward-Euler
/// sub-integration. Substep size is bounded by a fraction of the ultimate
/// hysteretic displacement; the returned derivative is chained through all
/// substeps so that it is consistent with the discrete update.
inline LinkUpdate advance_link(const BoucWenState& committed, double delta_du, const BoucWenParams& p,
                               double substep_fraction = 0.05) {
  LinkUpdate out;
  if (delta_du == 0.0) {
    out.state = committed;
    // zero increment: average of the loading and unloading branch slopes
    const double az = std::abs(committed.z);
    const double zw1 = p.w == 1.0 ? 1.0 : std::pow(az, p.w - 1.0);
    const double loading = (p.A - committed.nu * (p.beta + p.gamma) * az * zw1) / committed.eta_deg;
    const double unloading = (p.A - committed.nu * (p.gamma - p.beta) * az * zw1) / committed.eta_deg;
    out.dz_ddu = 0.5 * (loading + unloading);
    if (!(committed.eta_deg > 0.0)) throw RangeError("advance_link: eta <= 0 (runaway degradation)");
    return out;
  }
  const double zu = p.alpha < 1.0 ? p.ultimate_z() : 1.0;
  int substeps = 1;
  if (std::isfinite(zu) && zu > 0.0) {
    substeps = static_cast<int>(std::ceil(std::abs(delta_du) / (substep_fraction * zu)));
    substeps = std::clamp(substeps, 1, 2000);
  }
  for (int attempt = 0; attempt < 4; ++attempt) {
    const double d = delta_du / substeps;
    double z = committed.z;
    double eps = committed.eps_energy;
    double dz = 0.0;    // dz/d(delta_du)
    double deps = 0.0;  // deps/d(delta_du)
    bool ok = true;
    for (int s = 0; s < substeps; ++s) {
      detail::Substep sub;
      if (!detail::backward_euler_substep(z, eps, d, p, sub)) {
        ok = false;
        break;
      }
      const double dz_new = sub.dz_dz0 * dz + sub.dz_deps0 * deps + sub.dz_dd / substeps;
      deps = deps + (dz_new * d + sub.z / substeps) / p.energy_norm;
      dz = dz_new;
      z = sub.z;
      eps = sub.eps;
    }
    if (ok) {
      out.state = state_from_energy(z, eps, p);
      out.dz_ddu = dz;
      return out;
    }
    substeps *= 4;
  }
  throw RangeError("advance_link: hysteretic update failed (degradation factor eta <= 0 or divergence)");
}

}  // namespace vprom::fom
