#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vprom/error.hpp"
#include "vprom/fom/simulate.hpp"
#include "vprom/linalg.hpp"
#include "vprom/rom/reduction.hpp"

namespace vprom::rom {

/// Non-negative element weights of a hyper-reduced force assembly.
struct EcswWeights {
  std::vector<std::size_t> selected;  // element (link) indices, ascending
  std::vector<double> xi;             // weight of each selected element
  double tau = 0.0;

  std::size_t size() const { return selected.size(); }

  static EcswWeights unit(std::size_t n_elements) {
    EcswWeights w;
    w.selected.resize(n_elements);
    w.xi.assign(n_elements, 1.0);
    for (std::size_t e = 0; e < n_elements; ++e) w.selected[e] = e;
    return w;
  }
};

/// Galerkin-projected frame. The reduced internal force is accumulated
/// element by element, g_r = sum_e xi_e R_e d_e with d_e = V_b - V_a the
/// projected link kinematics, over all links or an ECSW subset.
class ReducedFrameModel {
 public:
  using State = std::vector<fom::BoucWenState>;

  ReducedFrameModel(const fom::FrameConfig& frame, fom::LinkProperties links, const Matrix& basis,
                    std::optional<EcswWeights> weights = std::nullopt)
      : frame_(frame), links_(std::move(links)), basis_(basis) {
    frame_.validate();
    const auto n = frame_.n_dofs();
    if (basis_.rows() != n) throw ShapeError("ReducedFrameModel: basis rows do not match the frame DOFs");
    if (links_.params.size() != frame_.links.size()) throw ShapeError("ReducedFrameModel: one law per link required");
    const Matrix m = frame_.mass_matrix();
    const Matrix k0 = fom::assemble_initial_stiffness(frame_, links_);
    mass_ = basis_.transpose() * m * basis_;
    k0_ = basis_.transpose() * k0 * basis_;
    if (frame_.rayleigh) damping_ = basis_.transpose() * fom::rayleigh_matrix(frame_, m, k0) * basis_;
    pattern_ = basis_.transpose() * frame_.influence;
    const auto r = basis_.cols();
    kinematics_.resize(r, static_cast<Eigen::Index>(frame_.links.size()));
    for (std::size_t e = 0; e < frame_.links.size(); ++e) {
      const auto& l = frame_.links[e];
      Vector d = basis_.row(l.dof_b).transpose();
      if (l.dof_a != fom::kGround) d -= basis_.row(l.dof_a).transpose();
      kinematics_.col(static_cast<Eigen::Index>(e)) = d;
    }
    weights_ = weights ? *weights : EcswWeights::unit(frame_.links.size());
    if (weights_.selected.size() != weights_.xi.size()) throw ShapeError("ReducedFrameModel: malformed weights");
    for (auto e : weights_.selected) {
      if (e >= frame_.links.size()) throw ShapeError("ReducedFrameModel: weight references an unknown element");
    }
  }

  Eigen::Index dim() const { return basis_.cols(); }
  const Matrix& mass() const { return mass_; }
  const Matrix* damping() const { return damping_.size() ? &damping_ : nullptr; }
  const Matrix& initial_tangent() const { return k0_; }
  const Vector& load_pattern() const { return pattern_; }
  State initial_state() const { return State(frame_.links.size()); }
  const Matrix& kinematics() const { return kinematics_; }
  const Matrix& basis() const { return basis_; }
  const EcswWeights& weights() const { return weights_; }
  const fom::FrameConfig& frame() const { return frame_; }
  const fom::LinkProperties& links() const { return links_; }

  void evaluate(const Vector& q, const Vector& qc, const State& committed, State& trial, Vector& g,
                Matrix& k) const {
    g.setZero(dim());
    k.setZero(dim(), dim());
    for (std::size_t i = 0; i < weights_.selected.size(); ++i) {
      const std::size_t e = weights_.selected[i];
      const double w = weights_.xi[i];
      const auto d = kinematics_.col(static_cast<Eigen::Index>(e));
      const auto& p = links_.params[e];
      const double du = d.dot(q);
      const double du_c = d.dot(qc);
      const fom::LinkUpdate up = fom::advance_link(committed[e], du - du_c, p);
      trial[e] = up.state;
      const double r = fom::restoring_force(du, up.state, p);
      const double kt = p.alpha * p.k + (1.0 - p.alpha) * p.k * up.dz_ddu;
      g.noalias() += (w * r) * d;
      k.noalias() += (w * kt) * d * d.transpose();
    }
  }

 private:
  fom::FrameConfig frame_;
  fom::LinkProperties links_;
  Matrix basis_;
  Matrix mass_;
  Matrix k0_;
  Matrix damping_;
  Vector pattern_;
  Matrix kinematics_;  // r x n_links
  EcswWeights weights_;
};

struct RomSolution {
  std::vector<double> times;
  Matrix q;       // N_t x r
  Matrix q_dot;
  Matrix q_ddot;
  Matrix u;       // N_t x n, reconstructed V q
  Matrix u_dot;
  Matrix u_ddot;
  std::string basis_provenance;
  fom::IntegrationStats stats;
  double wall_time = 0.0;
};

struct RomOptions {
  fom::NewmarkOptions newmark;
  bool reconstruct = true;
  std::string provenance = "pod";
};

/// Reduced trajectory and link states at every committed step, for building
/// hyper-reduction training data.
using RomCommitHook = fom::NewmarkIntegrator<ReducedFrameModel>::CommitHook;

/// Galerkin ROM of the frame under a prescribed ground history. Initial
/// reduced conditions are zero, matching the zero full-order start.
inline RomSolution rom_simulate_ground(const fom::FrameConfig& frame, const fom::LinkProperties& links,
                                       std::span<const double> ground, double dt, const Matrix& basis,
                                       const std::optional<EcswWeights>& hyper = std::nullopt,
                                       const RomOptions& opt = {}, const RomCommitHook& hook = {}) {
  ReducedFrameModel model(frame, links, basis, hyper);
  const Eigen::Index r = model.dim();
  fom::NewmarkIntegrator<ReducedFrameModel> integrator(model, opt.newmark);
  fom::Trajectory traj = integrator.run(ground, dt, Vector::Zero(r), Vector::Zero(r), hook);
  RomSolution sol;
  sol.times = std::move(traj.times);
  sol.q = std::move(traj.x);
  sol.q_dot = std::move(traj.v);
  sol.q_ddot = std::move(traj.a);
  sol.stats = traj.stats;
  sol.wall_time = traj.stats.wall_seconds;
  sol.basis_provenance = opt.provenance;
  if (opt.reconstruct) {
    sol.u = sol.q * basis.transpose();
    sol.u_dot = sol.q_dot * basis.transpose();
    sol.u_ddot = sol.q_ddot * basis.transpose();
  }
  return sol;
}

inline RomSolution rom_simulate(const fom::FrameConfig& frame, const fom::LinkProperties& links,
                                const fom::ExcitationSpec& spec, const Matrix& basis,
                                const std::optional<EcswWeights>& hyper = std::nullopt, const RomOptions& opt = {},
                                const RomCommitHook& hook = {}) {
  const std::vector<double> ground = fom::generate_excitation(spec);
  return rom_simulate_ground(frame, links, ground, spec.dt, basis, hyper, opt, hook);
}

inline RomSolution rom_simulate(const fom::Benchmark& bm, const doe::ParameterSample& sample, const Matrix& basis,
                                const std::optional<EcswWeights>& hyper = std::nullopt, RomOptions opt = {},
                                const RomCommitHook& hook = {}) {
  const auto c = bm.instantiate(sample);
  opt.newmark = bm.newmark;
  return rom_simulate(bm.frame, c.links, c.excitation, basis, hyper, opt, hook);
}

}  // namespace vprom::rom
