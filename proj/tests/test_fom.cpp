#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "vprom/fom/simulate.hpp"
#include "vprom/metrics.hpp"

using namespace vprom;
using namespace vprom::fom;

TEST(Excitation, ZeroAmplitudeGivesZeroSeries) {
  ExcitationSpec s;
  s.amp = 0.0;
  s.noise_seed = 99;
  for (double v : generate_excitation(s)) EXPECT_EQ(v, 0.0);
}

TEST(Excitation, FilterHasUnitDcGain) {
  Biquad f(10.0, 400.0);
  EXPECT_NEAR(f.dc_gain(), 1.0, 1e-14);
  std::vector<double> ones(4000, 1.0);
  EXPECT_NEAR(f.filter(ones).back(), 1.0, 1e-12);
}

TEST(Excitation, SameSeedIsBitIdentical) {
  ExcitationSpec s;
  s.noise_seed = 42;
  EXPECT_EQ(generate_excitation(s), generate_excitation(s));
  ExcitationSpec t = s;
  t.noise_seed = 43;
  EXPECT_NE(generate_excitation(s), generate_excitation(t));
}

TEST(Excitation, CutoffAboveNyquistIsRejected) {
  ExcitationSpec s;
  s.dt = 0.05;
  s.f_but = 15.0;
  EXPECT_THROW(generate_excitation(s), ConfigError);
}

TEST(BoucWen, RateAtZeroHystereticState) {
  BoucWenParams p;
  p.A = 1.7;
  const auto r = boucwen_rate({}, 0.3, p);
  EXPECT_DOUBLE_EQ(r.z_dot, 1.7 * 0.3);
}

TEST(BoucWen, NoMotionNoEvolution) {
  BoucWenParams p;
  const auto r = boucwen_rate({0.4, 0.2, 1.0, 1.1}, 0.0, p);
  EXPECT_EQ(r.z_dot, 0.0);
  EXPECT_EQ(r.eps_dot, 0.0);
}

TEST(BoucWen, RestoringForceHandValues) {
  BoucWenParams p;
  p.alpha = 0.5;
  p.k = 2.0;
  EXPECT_DOUBLE_EQ(restoring_force(1.0, {0.3}, p), 1.3);
  EXPECT_EQ(restoring_force(0.0, {}, p), 0.0);
  p.alpha = 1.0;
  EXPECT_EQ(restoring_force(0.7, {123.0}, p), 2.0 * 0.7);
}

TEST(BoucWen, RunawayDegradationIsRangeError) {
  BoucWenParams p;
  BoucWenState s;
  s.eta_deg = -0.1;
  EXPECT_THROW(boucwen_rate(s, 1.0, p), RangeError);
}

// Fine RK4 integration of dz/du on the loading branch as the reference.
TEST(BoucWen, MonotoneLoadingFollowsReferenceAndSaturates) {
  for (double w : {1.0, 2.0}) {
    BoucWenParams p;
    p.A = 1.0;
    p.beta = 6.0;
    p.gamma = 4.0;
    p.w = w;
    const double zu = p.ultimate_z();
    auto rate = [&](double z) { return p.A - (p.beta + p.gamma) * std::pow(std::abs(z), p.w - 1.0) * z; };
    const double du_end = 8.0 * zu;
    const int n_ref = 200000;
    const double h = du_end / n_ref;
    std::vector<double> ref(n_ref + 1, 0.0);
    for (int i = 0; i < n_ref; ++i) {
      const double z = ref[i];
      const double k1 = rate(z), k2 = rate(z + 0.5 * h * k1), k3 = rate(z + 0.5 * h * k2), k4 = rate(z + h * k3);
      ref[i + 1] = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    BoucWenState s;
    const int n = 4000;
    double worst = 0.0;
    for (int i = 1; i <= n; ++i) {
      s = advance_link(s, du_end / n, p).state;
      worst = std::max(worst, std::abs(s.z - ref[static_cast<std::size_t>(i) * (n_ref / n)]));
    }
    EXPECT_LT(worst, 2e-3 * zu) << "w=" << w;
    for (int i = 0; i < 200; ++i) s = advance_link(s, 0.1 * zu, p).state;
    EXPECT_NEAR(std::abs(s.z), zu, 1e-6 * zu) << "w=" << w;
  }
}

TEST(BoucWen, ConsistentTangentMatchesFiniteDifference) {
  BoucWenParams p;
  p.beta = 3.0;
  p.gamma = 2.0;
  p.delta_eta = 0.4;
  p.delta_nu = 0.2;
  const BoucWenState c = state_from_energy(0.05, 0.3, p);
  for (double d : {0.013, -0.027, 0.3137}) {  // away from substep-count switches
    const double h = 1e-7;
    const double fd = (advance_link(c, d + h, p).state.z - advance_link(c, d - h, p).state.z) / (2 * h);
    EXPECT_NEAR(advance_link(c, d, p).dz_ddu, fd, 1e-5 * std::max(1.0, std::abs(fd))) << d;
  }
}

TEST(Frame, ShearLayoutIsValid) {
  ShearFrameLayout l;
  l.n_stories = 4;
  l.dofs_per_story = 6;
  const FrameConfig f = make_shear_frame(l);
  EXPECT_NO_THROW(f.validate());
  EXPECT_EQ(f.n_dofs(), 24);
  EXPECT_NEAR(f.mass_matrix().trace(), 4 * l.story_mass * 2, 1e-6);  // x and y per node
}

TEST(Fom, ZeroExcitationStaysAtRest) {
  auto bm = oracle::tiny_benchmark();
  auto c = bm.instantiate(doe::make_sample(bm.domain, {0.4, 1e8, 2e6, 10, 210e9, 0.5}));
  c.excitation.amp = 0.0;
  const auto sol = simulate_fom(bm.frame, c.links, c.excitation);
  EXPECT_EQ(sol.u.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sol.u_ddot.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fom, LinearLimitMatchesModalSuperposition) {
  auto bm = oracle::tiny_benchmark();
  BoucWenParams law = bm.link_law;
  law.alpha = 1.0;
  law.k = 1e8;
  const auto links = LinkProperties::from_base(bm.frame, law);
  std::vector<double> ground(400, 0.0);
  ground[1] = 1e6 / bm.dt;  // impulse
  for (std::size_t i = 50; i < ground.size(); ++i) ground[i] = 3e5 * std::sin(0.07 * double(i));
  const auto sol = simulate_frame(bm.frame, links, ground, bm.dt);
  const Matrix k0 = assemble_initial_stiffness(bm.frame, links);
  const Matrix ref = oracle::modal_response(bm.frame.mass_matrix(), k0, bm.frame.influence, ground, bm.dt,
                                             bm.frame.rayleigh->a0, bm.frame.rayleigh->a1);
  EXPECT_LE((sol.u - ref).norm() / ref.norm(), 1e-6);
}

TEST(Fom, DoesNotDependOnThreadOrRepeat) {
  auto bm = oracle::tiny_benchmark();
  const auto s = doe::lhs_sample(bm.domain, 1, 5).front();
  const auto a = bm.simulate(s);
  const auto b = bm.simulate(s);
  EXPECT_EQ(a.u, b.u);
}

// Same ground record on a 4x finer grid by linear interpolation; compare at
// the coarse instants.
TEST(Fom, TimeStepRefinementConverges) {
  const auto bm = io::desk_preset().benchmark();
  for (const auto& s : {doe::make_sample(bm.domain, {0.25, 0.8e8, 3.0e6, 15.0, 185e9, 0.75}),
                        doe::lhs_sample(bm.domain, 1, 17).front()}) {
    const auto c = bm.instantiate(s);
    const std::vector<double> coarse = generate_excitation(c.excitation);
    std::vector<double> fine;
    for (std::size_t i = 0; i + 1 < coarse.size(); ++i)
      for (int k = 0; k < 4; ++k) fine.push_back(coarse[i] + 0.25 * k * (coarse[i + 1] - coarse[i]));
    fine.push_back(coarse.back());
    SimulationOptions opt;
    opt.newmark = bm.newmark;
    const auto a = simulate_frame(bm.frame, c.links, coarse, bm.dt, opt);
    const auto b = simulate_frame(bm.frame, c.links, fine, bm.dt / 4, opt);
    Matrix b_coarse(a.u.rows(), a.u.cols());
    for (Eigen::Index i = 0; i < a.u.rows(); ++i) b_coarse.row(i) = b.u.row(4 * i);
    EXPECT_LE(metrics::err_q(b_coarse, a.u), 1.0);
  }
}
