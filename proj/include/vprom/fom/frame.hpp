#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "vprom/error.hpp"
#include "vprom/fom/bouc_wen.hpp"
#include "vprom/linalg.hpp"

namespace vprom::fom {

inline constexpr int kGround = -1;

/// A hysteretic link between two DOFs (or a DOF and the ground).
/// Relative displacement is u[dof_b] - u[dof_a].
struct LinkSpec {
  int dof_a = kGround;
  int dof_b = 0;
  double stiffness_factor = 1.0;
};

struct RayleighDamping {
  double a0 = 0.0;  // [1/s], mass proportional
  double a1 = 0.0;  // [s], initial-stiffness proportional
};

struct FrameConfig {
  int n_stories = 1;
  int dofs_per_story = 1;
  std::vector<double> story_masses;  // [kg]
  std::vector<LinkSpec> links;
  std::optional<RayleighDamping> rayleigh;
  Vector influence;  // ground motion to DOF load direction

  int n_dofs() const { return n_stories * dofs_per_story; }
  std::size_t n_links() const { return links.size(); }

  /// Lumped mass of one DOF. DOFs come in (x, y) pairs per node, so the
  /// story mass is shared among the nodes of that story.
  double dof_mass(int dof) const {
    const int story = dof / dofs_per_story;
    const int nodes = dofs_per_story == 1 ? 1 : dofs_per_story / 2;
    return story_masses[static_cast<std::size_t>(story)] / nodes;
  }

  void validate() const {
    if (n_stories < 1) throw ConfigError("FrameConfig: n_stories must be >= 1");
    if (dofs_per_story < 1) throw ConfigError("FrameConfig: dofs_per_story must be >= 1");
    if (dofs_per_story > 1 && dofs_per_story % 2 != 0) {
      throw ConfigError("FrameConfig: dofs_per_story must be 1 or even (x/y pairs per node)");
    }
    if (story_masses.size() != static_cast<std::size_t>(n_stories)) {
      throw ConfigError("FrameConfig: story_masses must have n_stories entries");
    }
    for (double m : story_masses) {
      if (!(m > 0.0)) throw ConfigError("FrameConfig: all story masses must be positive");
    }
    const int n = n_dofs();
    if (influence.size() != n) throw ConfigError("FrameConfig: influence vector must have n_dofs entries");
    if (dofs_per_story == 1) {
      for (int i = 0; i < n; ++i) {
        if (std::abs(std::abs(influence(i)) - 1.0) > 1e-12) {
          throw ConfigError("FrameConfig: single-DOF stories need unit influence entries");
        }
      }
    } else {
      for (int i = 0; i < n; i += 2) {
        const double norm = std::hypot(influence(i), influence(i + 1));
        if (std::abs(norm - 1.0) > 1e-12) {
          throw ConfigError("FrameConfig: influence direction of every node must have unit norm");
        }
      }
    }
    for (const auto& l : links) {
      if (l.dof_b < 0 || l.dof_b >= n || l.dof_a < kGround || l.dof_a >= n || l.dof_a == l.dof_b) {
        throw ConfigError("FrameConfig: link references an invalid DOF");
      }
      if (!(l.stiffness_factor > 0.0)) throw ConfigError("FrameConfig: link stiffness factors must be positive");
    }
    if (links.empty()) throw ConfigError("FrameConfig: at least one link is required");
  }

  Matrix mass_matrix() const {
    const int n = n_dofs();
    Matrix m = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = dof_mass(i);
    return m;
  }
};

/// Geometry of the default benchmark frame: each story carries
/// dofs_per_story / 2 nodes with an (x, y) translation pair; columns link
/// every DOF to the same DOF one story below, and floor links couple
/// neighbouring nodes of a story in the same direction.
struct ShearFrameLayout {
  int n_stories = 2;
  int dofs_per_story = 2;
  double story_mass = 1.0e5;
  double theta = std::numbers::pi / 4.0;  // ground-motion direction w.r.t. x
  double floor_coupling = 0.5;           // floor-link stiffness relative to columns
  double height_taper = 0.5;             // top-story column stiffness is (1 - taper) of the base
  double irregularity = 0.3;             // plan-wise column stiffness variation amplitude
  std::optional<RayleighDamping> rayleigh;
};

inline FrameConfig make_shear_frame(const ShearFrameLayout& layout) {
  FrameConfig cfg;
  cfg.n_stories = layout.n_stories;
  cfg.dofs_per_story = layout.dofs_per_story;
  cfg.story_masses.assign(static_cast<std::size_t>(layout.n_stories), layout.story_mass);
  cfg.rayleigh = layout.rayleigh;
  const int d = layout.dofs_per_story;
  const int n = layout.n_stories * d;
  cfg.influence = Vector::Zero(n);
  const int nodes = d == 1 ? 1 : d / 2;
  for (int s = 0; s < layout.n_stories; ++s) {
    const double height = layout.n_stories == 1 ? 0.0 : double(s) / (layout.n_stories - 1);
    const double taper = 1.0 - layout.height_taper * height;
    for (int j = 0; j < d; ++j) {
      const int dof = s * d + j;
      const int node = d == 1 ? 0 : j / 2;
      const bool is_y = d > 1 && (j % 2 == 1);
      if (d == 1) {
        cfg.influence(dof) = 1.0;
      } else {
        cfg.influence(dof) = is_y ? std::sin(layout.theta) : std::cos(layout.theta);
      }
      const double phase = is_y ? 1.3 : 0.0;
      const double plan = nodes == 1 ? 0.0 : 2.0 * std::numbers::pi * node / nodes;
      const double factor = taper * (1.0 + layout.irregularity * std::cos(plan + phase + 0.7 * s));
      cfg.links.push_back({s == 0 ? kGround : dof - d, dof, factor});
    }
    if (nodes > 1) {
      for (int node = 0; node + 1 < nodes; ++node) {
        for (int dir = 0; dir < 2; ++dir) {
          const int a = s * d + 2 * node + dir;
          cfg.links.push_back({a, a + 2, layout.floor_coupling * taper});
        }
      }
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace vprom::fom
