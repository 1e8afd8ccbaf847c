#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "vprom/error.hpp"

namespace vprom::fom {

struct ExcitationSpec {
  double amp = 1.0;
  double f_but = 10.0;  // [Hz]
  std::uint64_t noise_seed = 0;
  double dt = 0.01;
  double duration = 1.0;

  std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(duration / dt)) + 1; }

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("ExcitationSpec: dt must be positive");
    if (!(duration >= dt)) throw ConfigError("ExcitationSpec: duration must be at least dt");
    const double nyquist = 0.5 / dt;
    if (!(f_but > 0.0) || !(f_but < nyquist)) {
      throw ConfigError("ExcitationSpec: Butterworth cutoff " + std::to_string(f_but) +
                        " Hz must lie in (0, Nyquist = " + std::to_string(nyquist) + " Hz)");
    }
  }
};

/// Second-order low-pass Butterworth section obtained by the bilinear
/// transform with frequency prewarping. Direct form II transposed, zero
/// initial state.
class Biquad {
 public:
  Biquad(double cutoff_hz, double sample_rate_hz) {
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < 0.5 * sample_rate_hz)) {
      throw ConfigError("Biquad: cutoff must lie strictly between 0 and the Nyquist frequency");
    }
    const double kw = std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
    const double kk = kw * kw;
    const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * kw + kk);
    b0_ = kk * norm;
    b1_ = 2.0 * b0_;
    b2_ = b0_;
    a1_ = 2.0 * (kk - 1.0) * norm;
    a2_ = (1.0 - std::numbers::sqrt2 * kw + kk) * norm;
  }

  double step(double x) {
    const double y = b0_ * x + s1_;
    s1_ = b1_ * x - a1_ * y + s2_;
    s2_ = b2_ * x - a2_ * y;
    return y;
  }

  std::vector<double> filter(std::span<const double> input) {
    std::vector<double> out;
    out.reserve(input.size());
    for (double x : input) out.push_back(step(x));
    return out;
  }

  void reset() { s1_ = s2_ = 0.0; }

  double dc_gain() const { return (b0_ + b1_ + b2_) / (1.0 + a1_ + a2_); }

 private:
  double b0_, b1_, b2_, a1_, a2_;
  double s1_ = 0.0, s2_ = 0.0;
};

/// Seeded unit white noise, low-pass filtered and scaled by the amplitude.
inline std::vector<double> generate_excitation(const ExcitationSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_steps();
  std::mt19937_64 rng(spec.noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> noise(n);
  for (auto& v : noise) v = normal(rng);
  Biquad filter(spec.f_but, 1.0 / spec.dt);
  std::vector<double> out = filter.filter(noise);
  for (auto& v : out) v *= spec.amp;
  return out;
}

}  // namespace vprom::fom
