#pragma once

#include <chrono>
#include <span>
#include <vector>

#include "vprom/doe.hpp"
#include "vprom/fom/bouc_wen.hpp"
#include "vprom/fom/excitation.hpp"
#include "vprom/fom/frame.hpp"
#include "vprom/fom/newmark.hpp"
#include "vprom/linalg.hpp"

namespace vprom::fom {

/// Material law of every link of a frame, already scaled by its stiffness factor.
struct LinkProperties {
  std::vector<BoucWenParams> params;

  static LinkProperties from_base(const FrameConfig& frame, const BoucWenParams& base, double modulus_ratio = 1.0) {
    base.validate();
    LinkProperties lp;
    lp.params.reserve(frame.links.size());
    for (const auto& l : frame.links) {
      BoucWenParams p = base;
      p.k = base.k * modulus_ratio * l.stiffness_factor;
      lp.params.push_back(p);
    }
    return lp;
  }
};

/// Initial tangent of every link (zero hysteretic state, loading branch).
inline double initial_link_stiffness(const BoucWenParams& p) {
  return p.alpha * p.k + (1.0 - p.alpha) * p.k * p.A;
}

inline Matrix assemble_initial_stiffness(const FrameConfig& frame, const LinkProperties& links) {
  const int n = frame.n_dofs();
  Matrix k = Matrix::Zero(n, n);
  for (std::size_t e = 0; e < frame.links.size(); ++e) {
    const auto& l = frame.links[e];
    const double ke = initial_link_stiffness(links.params[e]);
    k(l.dof_b, l.dof_b) += ke;
    if (l.dof_a != kGround) {
      k(l.dof_a, l.dof_a) += ke;
      k(l.dof_a, l.dof_b) -= ke;
      k(l.dof_b, l.dof_a) -= ke;
    }
  }
  return k;
}

inline Matrix rayleigh_matrix(const FrameConfig& frame, const Matrix& mass, const Matrix& k0) {
  if (!frame.rayleigh) return {};
  return frame.rayleigh->a0 * mass + frame.rayleigh->a1 * k0;
}

/// Full-order frame: index-based assembly of all hysteretic links.
class FullFrameModel {
 public:
  using State = std::vector<BoucWenState>;

  FullFrameModel(const FrameConfig& frame, LinkProperties links) : frame_(frame), links_(std::move(links)) {
    frame_.validate();
    if (links_.params.size() != frame_.links.size()) throw ShapeError("FullFrameModel: one law per link required");
    mass_ = frame_.mass_matrix();
    k0_ = assemble_initial_stiffness(frame_, links_);
    damping_ = rayleigh_matrix(frame_, mass_, k0_);
    pattern_ = frame_.influence;
  }

  Eigen::Index dim() const { return frame_.n_dofs(); }
  const Matrix& mass() const { return mass_; }
  const Matrix* damping() const { return damping_.size() ? &damping_ : nullptr; }
  const Matrix& initial_tangent() const { return k0_; }
  const Vector& load_pattern() const { return pattern_; }
  State initial_state() const { return State(frame_.links.size()); }
  const FrameConfig& frame() const { return frame_; }
  const LinkProperties& links() const { return links_; }

  double relative_displacement(std::size_t e, const Vector& x) const {
    const auto& l = frame_.links[e];
    return x(l.dof_b) - (l.dof_a == kGround ? 0.0 : x(l.dof_a));
  }

  void evaluate(const Vector& x, const Vector& xc, const State& committed, State& trial, Vector& g,
                Matrix& k) const {
    g.setZero(dim());
    k.setZero(dim(), dim());
    for (std::size_t e = 0; e < frame_.links.size(); ++e) {
      const auto& l = frame_.links[e];
      const auto& p = links_.params[e];
      const double du = relative_displacement(e, x);
      const double du_c = relative_displacement(e, xc);
      const LinkUpdate up = advance_link(committed[e], du - du_c, p);
      trial[e] = up.state;
      const double r = restoring_force(du, up.state, p);
      const double kt = p.alpha * p.k + (1.0 - p.alpha) * p.k * up.dz_ddu;
      g(l.dof_b) += r;
      k(l.dof_b, l.dof_b) += kt;
      if (l.dof_a != kGround) {
        g(l.dof_a) -= r;
        k(l.dof_a, l.dof_a) += kt;
        k(l.dof_a, l.dof_b) -= kt;
        k(l.dof_b, l.dof_a) -= kt;
      }
    }
  }

 private:
  FrameConfig frame_;
  LinkProperties links_;
  Matrix mass_;
  Matrix k0_;
  Matrix damping_;
  Vector pattern_;
};

struct FomSolution {
  std::vector<double> times;
  Matrix u;       // N_t x n
  Matrix u_dot;   // N_t x n
  Matrix u_ddot;  // N_t x n
  std::vector<BoucWenState> final_link_states;
  IntegrationStats stats;
  double wall_time = 0.0;
};

struct SimulationOptions {
  NewmarkOptions newmark;
  Vector initial_displacement;  // empty: zero
  Vector initial_velocity;      // empty: zero
};

/// Integrate the frame under a prescribed ground-motion history sampled at dt.
inline FomSolution simulate_frame(const FrameConfig& frame, const LinkProperties& links,
                                  std::span<const double> ground, double dt, const SimulationOptions& opt = {}) {
  FullFrameModel model(frame, links);
  const Eigen::Index n = model.dim();
  const Vector x0 = opt.initial_displacement.size() ? opt.initial_displacement : Vector::Zero(n);
  const Vector v0 = opt.initial_velocity.size() ? opt.initial_velocity : Vector::Zero(n);
  std::vector<BoucWenState> last;
  NewmarkIntegrator<FullFrameModel> integrator(model, opt.newmark);
  Trajectory traj = integrator.run(ground, dt, x0, v0, [&](std::size_t step, const Vector&, const auto& state) {
    if (step + 1 == ground.size()) last = state;
  });
  FomSolution sol;
  sol.times = std::move(traj.times);
  sol.u = std::move(traj.x);
  sol.u_dot = std::move(traj.v);
  sol.u_ddot = std::move(traj.a);
  sol.final_link_states = std::move(last);
  sol.stats = traj.stats;
  sol.wall_time = traj.stats.wall_seconds;
  return sol;
}

inline FomSolution simulate_fom(const FrameConfig& frame, const LinkProperties& links, const ExcitationSpec& spec,
                                const SimulationOptions& opt = {}) {
  const std::vector<double> ground = generate_excitation(spec);
  return simulate_frame(frame, links, ground, spec.dt, opt);
}

/// Fixed ingredients of the parametric hysteretic frame benchmark; the
/// parameter sample supplies alpha, k, amp, f_but, E and delta_eta.
struct Benchmark {
  FrameConfig frame;
  BoucWenParams link_law;         // alpha, k, delta_eta overridden per sample
  double reference_modulus = 210e9;
  double dt = 0.01;
  double duration = 5.0;
  std::uint64_t noise_seed = 1;   // one white-noise template shared by all samples
  NewmarkOptions newmark;
  doe::ParameterDomain domain = doe::benchmark_domain();

  struct Case {
    LinkProperties links;
    ExcitationSpec excitation;
  };

  Case instantiate(const doe::ParameterSample& sample) const {
    auto value = [&](const char* name) { return sample.values.at(domain.index_of(name)); };
    BoucWenParams law = link_law;
    law.alpha = value("alpha");
    law.k = value("k");
    law.delta_eta = value("delta_eta");
    const double modulus_ratio = value("E") / reference_modulus;
    Case c{LinkProperties::from_base(frame, law, modulus_ratio), {}};
    c.excitation.amp = value("amp");
    c.excitation.f_but = value("f_but");
    c.excitation.noise_seed = noise_seed;
    c.excitation.dt = dt;
    c.excitation.duration = duration;
    return c;
  }

  FomSolution simulate(const doe::ParameterSample& sample) const {
    const Case c = instantiate(sample);
    SimulationOptions opt;
    opt.newmark = newmark;
    return simulate_fom(frame, c.links, c.excitation, opt);
  }
};

}  // namespace vprom::fom
