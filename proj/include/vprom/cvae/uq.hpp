#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vprom/cvae/cvae.hpp"
#include "vprom/rom/rom.hpp"

namespace vprom::cvae {

struct BasisDistribution {
  rom::ReductionBasis mean_basis;
  std::vector<rom::ReductionBasis> draws;
};

/// Per-step min/max over the sampled-basis ROM responses at one DOF.
struct ResponseEnvelope {
  Eigen::Index dof = 0;
  std::vector<double> times;
  Vector mean;   // response of the mean basis
  Vector lower;
  Vector upper;
  std::size_t n_draws = 0;
  std::size_t n_failed = 0;
  std::vector<std::string> failures;

  double containment() const {
    if (mean.size() == 0) return 0.0;
    std::size_t in = 0;
    for (Eigen::Index t = 0; t < mean.size(); ++t) in += (lower(t) <= mean(t) && mean(t) <= upper(t)) ? 1 : 0;
    return static_cast<double>(in) / static_cast<double>(mean.size());
  }
};

/// Everything needed to run the ROM of one query case.
struct RomContext {
  const fom::Benchmark* benchmark = nullptr;
  doe::ParameterSample sample;
};

struct EnvelopeResult {
  BasisDistribution bases;
  ResponseEnvelope envelope;
};

/// Sample the latent space n_draws times, run the ROM for each decoded basis
/// and collect the min/max envelope at `dof` (negative: the DOF with the
/// largest absolute mean-basis response). At least 80 % of the draws must
/// produce a ROM solution.
inline EnvelopeResult uncertainty_envelope(const ColumnModels& models, const Matrix& v_global, const RomContext& ctx,
                                           std::size_t n_draws = 40, std::uint64_t seed = 1,
                                           Eigen::Index dof = -1) {
  if (!ctx.benchmark) throw ConfigError("uncertainty_envelope: missing ROM context");
  if (n_draws < 1) throw ConfigError("uncertainty_envelope: n_draws must be >= 1");
  const Vector p = Eigen::Map<const Vector>(ctx.sample.normalized.data(),
                                            static_cast<Eigen::Index>(ctx.sample.normalized.size()));
  EnvelopeResult out;
  out.bases.mean_basis = generate_basis(models, v_global, p, GenerationMode::mean);
  const rom::RomSolution mean_sol = rom::rom_simulate(*ctx.benchmark, ctx.sample, out.bases.mean_basis.modes);
  auto& env = out.envelope;
  if (dof < 0) mean_sol.u.cwiseAbs().colwise().maxCoeff().maxCoeff(&dof);
  if (dof >= mean_sol.u.cols()) throw RangeError("uncertainty_envelope: DOF index out of range");
  env.dof = dof;
  env.times = mean_sol.times;
  env.mean = mean_sol.u.col(dof);
  env.lower = Vector::Constant(env.mean.size(), std::numeric_limits<double>::infinity());
  env.upper = Vector::Constant(env.mean.size(), -std::numeric_limits<double>::infinity());
  env.n_draws = n_draws;
  std::mt19937_64 rng(seed);
  for (std::size_t d = 0; d < n_draws; ++d) {
    rom::ReductionBasis b = generate_basis(models, v_global, p, GenerationMode::sampled, &rng);
    try {
      const rom::RomSolution s = rom::rom_simulate(*ctx.benchmark, ctx.sample, b.modes);
      env.lower = env.lower.cwiseMin(s.u.col(dof));
      env.upper = env.upper.cwiseMax(s.u.col(dof));
      out.bases.draws.push_back(std::move(b));
    } catch (const Error& e) {
      ++env.n_failed;
      env.failures.push_back("draw " + std::to_string(d) + ": " + e.what());
    }
  }
  if (static_cast<double>(n_draws - env.n_failed) < 0.8 * static_cast<double>(n_draws)) {
    throw ConvergenceError("uncertainty_envelope: only " + std::to_string(n_draws - env.n_failed) + " of " +
                               std::to_string(n_draws) + " draws produced a ROM solution",
                           -1);
  }
  return out;
}

}  // namespace vprom::cvae
