#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "support.hpp"
#include "vprom/cvae/cvae.hpp"
#include "vprom/cvae/uq.hpp"
#include "vprom/rom/reduction.hpp"

using namespace vprom;
using namespace vprom::cvae;

namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double s = 1.0) {
  return s * detail::standard_normal(r, c, rng);
}

// Visit every scalar parameter of a network.
void for_each_param(Mlp& net, const std::function<void(double&)>& f) {
  for (auto& l : net.layers()) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) f(l.weights.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias.data()[i]);
  }
}

std::vector<double> flatten(const std::vector<LayerGrad>& g) {
  std::vector<double> out;
  for (const auto& l : g) {
    out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

// Decoder that returns p and ignores z; encoder that returns mu = log_var = 0.
CvaeModel perfect_model(Eigen::Index dim, Eigen::Index latent) {
  CvaeModel m;
  m.x_dim = m.p_dim = dim;
  m.latent_dim = latent;
  DenseLayer enc{Matrix::Zero(2 * latent, 2 * dim), Vector::Zero(2 * latent), Activation::identity};
  Matrix w = Matrix::Zero(dim, latent + dim);
  w.rightCols(dim).setIdentity();
  DenseLayer dec{w, Vector::Zero(dim), Activation::identity};
  m.encoder = Mlp({enc});
  m.decoder = Mlp({dec});
  m.trained = true;
  return m;
}

}  // namespace

TEST(Normalization, HandValuesAndRoundTrip) {
  EXPECT_EQ(normalize_column(Vector::Constant(1, -1.0))(0), 0.0);
  EXPECT_NEAR(normalize_column(Vector::Constant(1, std::numbers::e - 2.0))(0), 1.0, 1e-15);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector x(500);
  for (auto& v : x) v = u(rng);
  EXPECT_LE((denormalize_column(normalize_column(x)) - x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(normalize_column(Vector::Constant(2, -2.0)), RangeError);
}

TEST(Dense, IdentityLayerPassesInput) {
  const Mlp net({DenseLayer{Matrix::Identity(3, 3), Vector::Zero(3), Activation::identity}});
  std::mt19937_64 rng(2);
  const Matrix x = gaussian(3, 4, rng);
  EXPECT_EQ(net.forward(x), x);
}

TEST(Dense, ZeroInputGivesActivationOfZero) {
  std::mt19937_64 rng(3);
  for (auto act : {Activation::tanh, Activation::sigmoid}) {
    const Mlp net({DenseLayer{gaussian(4, 3, rng), Vector::Zero(4), act}});
    const Matrix y = net.forward(Matrix::Zero(3, 2));
    EXPECT_EQ(y, Matrix::Constant(4, 2, act == Activation::tanh ? 0.0 : 0.5));
  }
}

TEST(Dense, TanhLayerGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  Mlp net({DenseLayer{gaussian(4, 3, rng, 0.7), gaussian(4, 1, rng, 0.3).col(0), Activation::tanh}});
  const Matrix x = gaussian(3, 5, rng);
  const Matrix w = gaussian(4, 5, rng);
  auto loss = [&](const Mlp& n, const Matrix& in) { return n.forward(in).cwiseProduct(w).sum(); };
  Tape tape;
  net.forward(x, &tape);
  std::vector<LayerGrad> g;
  const Matrix gx = net.backward(tape, w, g);
  const double h = 1e-6;
  std::vector<double> fd;
  for_each_param(net, [&](double& p) {
    const double keep = p;
    p = keep + h;
    const double up = loss(net, x);
    p = keep - h;
    const double dn = loss(net, x);
    p = keep;
    fd.push_back((up - dn) / (2 * h));
  });
  EXPECT_LE(max_rel_error(flatten(g), fd), 1e-6);
  Matrix xin = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = xin.data()[i];
    xin.data()[i] = keep + h;
    const double up = loss(net, xin);
    xin.data()[i] = keep - h;
    const double dn = loss(net, xin);
    xin.data()[i] = keep;
    EXPECT_NEAR(gx.data()[i], (up - dn) / (2 * h), 1e-6 * std::max(1.0, std::abs(gx.data()[i])));
  }
}

TEST(Reparameterize, DegenerateCases) {
  std::mt19937_64 rng(5);
  const Matrix mu = gaussian(3, 2, rng), sigma = gaussian(3, 2, rng).cwiseAbs(), eta = gaussian(3, 2, rng);
  EXPECT_EQ(reparameterize(mu, sigma, Matrix::Zero(3, 2)), mu);
  EXPECT_EQ(reparameterize(mu, Matrix::Zero(3, 2), eta), mu);
  EXPECT_THROW(reparameterize(mu, sigma, Matrix::Zero(2, 2)), ShapeError);
}

TEST(Reparameterize, SampleMeanWithinThreeStandardErrors) {
  std::mt19937_64 rng(6);
  const int n = 100000;
  const Matrix mu = Matrix::Constant(2, n, 0.7);
  Matrix sigma(2, n);
  sigma.row(0).setConstant(0.5);
  sigma.row(1).setConstant(2.0);
  const Matrix z = reparameterize(mu, sigma, detail::standard_normal(2, n, rng));
  const Vector mean = z.rowwise().mean();
  EXPECT_LE(std::abs(mean(0) - 0.7), 3.0 * 0.5 / std::sqrt(double(n)));
  EXPECT_LE(std::abs(mean(1) - 0.7), 3.0 * 2.0 / std::sqrt(double(n)));
}

TEST(Kl, ClosedFormValues) {
  EXPECT_EQ(kl_term(Vector::Zero(3), Vector::Zero(3)), 0.0);
  EXPECT_DOUBLE_EQ(kl_term(Vector::Ones(1), Vector::Zero(1)), 0.5);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) EXPECT_GE(kl_term(gaussian(4, 1, rng, 3.0).col(0), gaussian(4, 1, rng, 3.0).col(0)), 0.0);
}

TEST(Kl, MatchesMonteCarloEstimate) {
  std::mt19937_64 rng(8);
  Vector mu(3), lv(3);
  mu << 0.8, -0.4, 1.5;
  lv << -0.6, 0.5, 0.2;
  const int n = 100000;
  const Vector sd = (0.5 * lv.array()).exp().matrix();
  double acc = 0.0;
  std::normal_distribution<double> g;
  for (int k = 0; k < n; ++k) {
    double log_q = 0.0, log_p = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double e = g(rng);
      const double z = mu(j) + sd(j) * e;
      log_q += -0.5 * e * e - std::log(sd(j));
      log_p += -0.5 * z * z;
    }
    acc += log_q - log_p;
  }
  const double mc = acc / n;
  const double exact = kl_term(mu, lv);
  EXPECT_LE(std::abs(mc - exact) / exact, 0.02);
}

TEST(Elbo, PerfectDecoderAndPriorPosteriorGiveZero) {
  const CvaeModel m = perfect_model(3, 2);
  std::mt19937_64 rng(9);
  const Matrix p = gaussian(3, 4, rng);
  const auto l = elbo_loss(m, p, p, {gaussian(2, 4, rng), gaussian(2, 4, rng)});
  EXPECT_EQ(l.loss, 0.0);
  EXPECT_EQ(l.kl, 0.0);
}

TEST(Elbo, FullModelGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  TrainConfig cfg;
  cfg.hidden = {2};
  cfg.latent_dim = 2;
  CvaeModel m = CvaeModel::create(3, 2, cfg, rng);
  const Matrix x = gaussian(3, 4, rng), p = gaussian(2, 4, rng);
  const std::vector<Matrix> eta{gaussian(2, 4, rng), gaussian(2, 4, rng)};
  ModelGrad g;
  elbo_loss(m, x, p, eta, &g);
  const double h = 1e-6;
  for (bool enc : {true, false}) {
    std::vector<double> fd;
    for_each_param(enc ? m.encoder : m.decoder, [&](double& w) {
      const double keep = w;
      w = keep + h;
      const double up = elbo_loss(m, x, p, eta).loss;
      w = keep - h;
      const double dn = elbo_loss(m, x, p, eta).loss;
      w = keep;
      fd.push_back((up - dn) / (2 * h));
    });
    EXPECT_LE(max_rel_error(flatten(enc ? g.encoder : g.decoder), fd), 1e-5) << (enc ? "encoder" : "decoder");
  }
}

TEST(Elbo, FrozenTrueDecoderDrivesPosteriorToPrior) {
  CvaeModel m = perfect_model(2, 2);
  std::mt19937_64 rng(11);
  m.encoder.layers()[0].bias << 1.2, -0.8, 0.9, -1.5;  // mu, log_var
  Adam opt(m.encoder, 0.02);
  const Matrix p = gaussian(2, 6, rng);
  for (int it = 0; it < 3000; ++it) {
    ModelGrad g;
    elbo_loss(m, p, p, {gaussian(2, 6, rng)}, &g);
    g.encoder[0].weights.setZero();  // only the output bias moves
    opt.step(m.encoder, g.encoder);
  }
  EXPECT_LE(m.encoder.layers()[0].bias.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Train, ConstantDatasetIsMemorized) {
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.hidden = {16};
  const std::vector<TrainingPair> pairs(
      1, TrainingPair{Vector::Constant(3, 0.2), normalize_column(Vector::LinSpaced(5, -0.5, 0.5))});
  const CvaeModel m = train(pairs, cfg);
  // Mean-code reconstruction, measured where the networks operate.
  const Vector net = m.decode(Matrix::Zero(cfg.latent_dim, 1), pairs[0].p).col(0);
  EXPECT_LE((net - m.to_network(pairs[0].x_norm)).squaredNorm() / 5.0, 1e-4);
  EXPECT_LE((m.from_network(net) - pairs[0].x_norm).squaredNorm() / 5.0, 1e-4);
  EXPECT_LE(m.loss_trace.back(), m.loss_trace.front());
}

TEST(Train, SameSeedSameWeights) {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.hidden = {6};
  std::mt19937_64 rng(13);
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 5; ++i) pairs.push_back({gaussian(2, 1, rng).col(0), gaussian(4, 1, rng, 0.1).col(0)});
  const CvaeModel a = train(pairs, cfg), b = train(pairs, cfg);
  for (std::size_t k = 0; k < a.decoder.layers().size(); ++k) {
    EXPECT_EQ(a.decoder.layers()[k].weights, b.decoder.layers()[k].weights);
    EXPECT_EQ(a.encoder.layers()[k].weights, b.encoder.layers()[k].weights);
  }
  cfg.seed = 8;
  EXPECT_NE(train(pairs, cfg).decoder.layers()[0].weights, a.decoder.layers()[0].weights);
}

TEST(Train, LossNeverEndsAboveStart) {
  std::mt19937_64 rng(14);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.seed = seed;
    cfg.hidden = {12, 12};
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 10; ++i) {
      const Vector p = gaussian(3, 1, rng).col(0);
      pairs.push_back({p, (0.1 * p.head(2)).replicate(2, 1)});
    }
    const CvaeModel m = train(pairs, cfg);
    EXPECT_LE(m.loss_trace.back(), m.loss_trace.front()) << seed;
  }
}

TEST(Train, DivergenceIsReported) {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = cfg.final_learning_rate = 1e3;
  cfg.divergence_limit = 1.0;
  std::vector<TrainingPair> pairs(4, TrainingPair{Vector::Zero(2), Vector::Ones(3)});
  pairs[1].x_norm *= 5.0;
  try {
    train(pairs, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_FALSE(e.trace().empty());
  }
}

TEST(Generate, MeanModeIsDeterministicAndOrthonormal) {
  std::mt19937_64 rng(15);
  const Matrix vg = orthonormalize_qr(gaussian(20, 6, rng));
  std::vector<Matrix> xs;
  std::vector<Vector> ps;
  for (int i = 0; i < 6; ++i) {
    xs.push_back(orthonormalize_qr(Matrix::Identity(6, 2) + 0.1 * gaussian(6, 2, rng)));
    ps.push_back(gaussian(2, 1, rng).col(0));
  }
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.hidden = {8};
  const auto models = train_columns(xs, ps, cfg);
  const auto a = generate_basis(models, vg, ps[0], GenerationMode::mean);
  const auto b = generate_basis(models, vg, ps[0], GenerationMode::mean);
  EXPECT_EQ(a.modes, b.modes);
  EXPECT_LE(orthonormality_defect(a.modes), 1e-10);
  std::mt19937_64 g(1);
  EXPECT_LE(orthonormality_defect(generate_basis(models, vg, ps[0], GenerationMode::sampled, &g).modes), 1e-10);
  EXPECT_THROW(generate_basis(models, vg, ps[0], GenerationMode::sampled), ConfigError);
}

TEST(Generate, SinglePairIsRecovered) {
  std::mt19937_64 rng(16);
  const Matrix vg = orthonormalize_qr(gaussian(30, 8, rng));
  Matrix x = orthonormalize_qr(gaussian(8, 3, rng));
  rom::canonicalize_column_signs(x);
  const Vector p = gaussian(3, 1, rng).col(0);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.hidden = {8};
  const auto models = train_columns({x}, {p}, cfg);
  EXPECT_LE(oracle::subspace_angle(generate_basis(models, vg, p, GenerationMode::mean).modes, vg * x), 0.1);
}

TEST(Generate, UntrainedModelIsRejected) {
  ColumnModels models;
  models.columns.push_back(perfect_model(2, 1));
  models.columns[0].trained = false;
  EXPECT_THROW(generate_coefficients(models, Vector::Zero(2), GenerationMode::mean), ConfigError);
}

class Envelope : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    bm_ = oracle::tiny_benchmark();
    const auto train = doe::lhs_sample(bm_.domain, 5, 3);
    std::vector<fom::FomSolution> sols;
    for (const auto& s : train) sols.push_back(bm_.simulate(s));
    vg_ = rom::pod(rom::assemble_snapshots(sols).matrix, rom::Truncation::fixed(5)).basis.modes;
    std::vector<Matrix> xs;
    std::vector<Vector> ps;
    for (std::size_t i = 0; i < train.size(); ++i) {
      Matrix x = rom::compute_coefficients(rom::pod_basis(sols[i].u.transpose(), rom::Truncation::fixed(3)).modes, vg_).x;
      rom::canonicalize_column_signs(x);
      xs.push_back(x);
      ps.push_back(Eigen::Map<const Vector>(train[i].normalized.data(), 6));
    }
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.hidden = {8};
    models_ = train_columns(xs, ps, cfg);
    query_ = doe::lhs_sample(bm_.domain, 1, 99).front();
  }
  static inline fom::Benchmark bm_;
  static inline Matrix vg_;
  static inline ColumnModels models_;
  static inline doe::ParameterSample query_;
};

TEST_F(Envelope, SingleDrawCollapses) {
  const auto r = uncertainty_envelope(models_, vg_, {&bm_, query_}, 1, 5);
  std::mt19937_64 rng(5);
  const Vector p = Eigen::Map<const Vector>(query_.normalized.data(), 6);
  const auto b = generate_basis(models_, vg_, p, GenerationMode::sampled, &rng);
  const Vector traj = rom::rom_simulate(bm_, query_, b.modes).u.col(r.envelope.dof);
  EXPECT_EQ(r.envelope.lower, traj);
  EXPECT_EQ(r.envelope.upper, traj);
}

TEST_F(Envelope, WidthIsNonNegativeAndContainsMean) {
  const auto r = uncertainty_envelope(models_, vg_, {&bm_, query_}, 12, 6);
  EXPECT_EQ(r.envelope.n_failed, 0u);
  EXPECT_EQ(r.bases.draws.size(), 12u);
  EXPECT_GE((r.envelope.upper - r.envelope.lower).minCoeff(), 0.0);
  EXPECT_GE(r.envelope.containment(), 0.0);
  EXPECT_THROW(uncertainty_envelope(models_, vg_, {&bm_, query_}, 2, 1, 999), RangeError);
}
