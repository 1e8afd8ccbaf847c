#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vprom/cvae/network.hpp"
#include "vprom/error.hpp"
#include "vprom/linalg.hpp"
#include "vprom/rom/reduction.hpp"

namespace vprom::cvae {

inline constexpr double kNormShift = 2.0;
inline constexpr double kLogVarClamp = 10.0;

/// x -> ln(x + 2), defined for x > -2.
inline Vector normalize_column(const Vector& x) {
  if (x.size() && x.minCoeff() <= -kNormShift) {
    Eigen::Index i = 0;
    x.minCoeff(&i);
    throw RangeError("normalize_column: entry " + std::to_string(i) + " = " + std::to_string(x(i)) +
                     " is not greater than -2");
  }
  return (x.array() + kNormShift).log().matrix();
}

inline Vector denormalize_column(const Vector& x_norm) { return (x_norm.array().exp() - kNormShift).matrix(); }

/// z = mu + eta * sigma, elementwise.
inline Matrix reparameterize(const Matrix& mu, const Matrix& sigma, const Matrix& eta) {
  if (mu.rows() != sigma.rows() || mu.cols() != sigma.cols() || mu.rows() != eta.rows() || mu.cols() != eta.cols()) {
    throw ShapeError("reparameterize: shapes differ");
  }
  return mu + eta.cwiseProduct(sigma);
}

/// KL(N(mu, diag(exp(log_var))) || N(0, I)) summed over the latent entries.
inline double kl_term(const Vector& mu, const Vector& log_var) {
  if (mu.size() != log_var.size()) throw ShapeError("kl_term: shapes differ");
  double s = 0.0;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    s += std::exp(log_var(j)) - 1.0 - log_var(j) + mu(j) * mu(j);
  }
  return std::max(0.0, 0.5 * s);
}

struct TrainConfig {
  int epochs = 1500;
  int batch_size = 8;
  double learning_rate = 2e-3;
  double final_learning_rate = 2e-3;  // geometric decay towards this value
  std::uint64_t seed = 7;
  int n_latent_samples = 1;
  std::vector<Eigen::Index> hidden{32, 32};
  Eigen::Index latent_dim = 4;
  Activation activation = Activation::tanh;
  double divergence_limit = 1e6;
  double scale_floor = 1e-6;  // lower bound of the per-entry standardization scale

  void validate() const {
    if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0.0) || !(final_learning_rate > 0.0) || n_latent_samples < 1 || latent_dim < 1) {
      throw ConfigError("TrainConfig: epochs, batch size, learning rate, N_v and latent size must be positive");
    }
    for (auto h : hidden) {
      if (h <= 0) throw ConfigError("TrainConfig: hidden sizes must be positive");
    }
  }
};

/// Conditional VAE for one coefficient-matrix column.
struct CvaeModel {
  Mlp encoder;  // [x_norm; p] -> [mu; log_var]
  Mlp decoder;  // [z; p] -> x_norm
  Eigen::Index latent_dim = 0;
  Eigen::Index x_dim = 0;
  Eigen::Index p_dim = 0;
  std::size_t column_index = 0;
  bool trained = false;
  std::vector<double> loss_trace;
  // The networks see (x_norm - shift) / scale; empty means identity.
  Vector shift;
  Vector scale;

  Vector to_network(const Vector& x_norm) const {
    return shift.size() ? Vector(((x_norm - shift).array() / scale.array()).matrix()) : x_norm;
  }
  Vector from_network(const Vector& s) const {
    return shift.size() ? Vector(shift + s.cwiseProduct(scale)) : s;
  }

  static CvaeModel create(Eigen::Index x_dim, Eigen::Index p_dim, const TrainConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    CvaeModel m;
    m.latent_dim = cfg.latent_dim;
    m.x_dim = x_dim;
    m.p_dim = p_dim;
    std::vector<Eigen::Index> enc{x_dim + p_dim};
    enc.insert(enc.end(), cfg.hidden.begin(), cfg.hidden.end());
    enc.push_back(2 * cfg.latent_dim);
    std::vector<Eigen::Index> dec{cfg.latent_dim + p_dim};
    dec.insert(dec.end(), cfg.hidden.begin(), cfg.hidden.end());
    dec.push_back(x_dim);
    m.encoder = Mlp::build(enc, cfg.activation, rng);
    m.decoder = Mlp::build(dec, cfg.activation, rng);
    return m;
  }

  void check() const {
    if (encoder.empty() || decoder.empty()) throw ShapeError("CvaeModel: missing network");
    if (encoder.in_dim() != x_dim + p_dim || encoder.out_dim() != 2 * latent_dim) {
      throw ShapeError("CvaeModel: encoder shape inconsistent with x, p and latent sizes");
    }
    if (decoder.in_dim() != latent_dim + p_dim || decoder.out_dim() != x_dim) {
      throw ShapeError("CvaeModel: decoder shape inconsistent with x, p and latent sizes");
    }
  }

  /// Raw decoder output (network space) for latent codes z (J x B) under conditions p (P x B).
  Matrix decode(const Matrix& z, const Matrix& p) const {
    Matrix in(latent_dim + p_dim, z.cols());
    in << z, p;
    return decoder.forward(in);
  }
};

struct ModelGrad {
  std::vector<LayerGrad> encoder;
  std::vector<LayerGrad> decoder;
};

struct LossValue {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

/// Batch-averaged negative ELBO: mean squared reconstruction error over the
/// column entries (averaged over the N_v latent draws) plus the KL term.
/// eta holds N_v blocks of J x B standard normal draws. Gradients are
/// accumulated into grad when given.
inline LossValue elbo_loss(const CvaeModel& model, const Matrix& x, const Matrix& p, const std::vector<Matrix>& eta,
                           ModelGrad* grad = nullptr) {
  model.check();
  const Eigen::Index b = x.cols();
  const Eigen::Index j = model.latent_dim;
  if (x.rows() != model.x_dim || p.rows() != model.p_dim || p.cols() != b) throw ShapeError("elbo_loss: batch shapes");
  if (eta.empty()) throw ShapeError("elbo_loss: at least one latent draw required");
  for (const auto& e : eta) {
    if (e.rows() != j || e.cols() != b) throw ShapeError("elbo_loss: latent draw shape");
  }
  const double nv = static_cast<double>(eta.size());
  const double nb = static_cast<double>(b);
  const double nd = static_cast<double>(model.x_dim);

  Matrix enc_in(model.x_dim + model.p_dim, b);
  enc_in << x, p;
  Tape enc_tape;
  const Matrix h = model.encoder.forward(enc_in, grad ? &enc_tape : nullptr);
  const Matrix mu = h.topRows(j);
  const Matrix raw_lv = h.bottomRows(j);
  const Matrix lv = raw_lv.cwiseMax(-kLogVarClamp).cwiseMin(kLogVarClamp);
  const Matrix sigma = (0.5 * lv.array()).exp().matrix();

  LossValue out;
  for (Eigen::Index c = 0; c < b; ++c) out.kl += kl_term(mu.col(c), lv.col(c));
  out.kl /= nb;

  Matrix d_mu = Matrix::Zero(j, b);
  Matrix d_lv = Matrix::Zero(j, b);
  if (grad) {
    *grad = {model.encoder.zero_grads(), model.decoder.zero_grads()};
  }
  for (const auto& e : eta) {
    const Matrix z = reparameterize(mu, sigma, e);
    Matrix dec_in(j + model.p_dim, b);
    dec_in << z, p;
    Tape dec_tape;
    const Matrix xh = model.decoder.forward(dec_in, grad ? &dec_tape : nullptr);
    const Matrix r = xh - x;
    out.reconstruction += r.squaredNorm() / (nv * nb * nd);
    if (grad) {
      const Matrix g_out = (2.0 / (nv * nb * nd)) * r;
      std::vector<LayerGrad> g;
      const Matrix g_in = model.decoder.backward(dec_tape, g_out, g);
      for (std::size_t k = 0; k < g.size(); ++k) {
        grad->decoder[k].weights += g[k].weights;
        grad->decoder[k].bias += g[k].bias;
      }
      const Matrix g_z = g_in.topRows(j);
      d_mu += g_z;
      d_lv += (g_z.array() * e.array() * sigma.array() * 0.5).matrix();
    }
  }
  out.loss = out.reconstruction + out.kl;
  if (grad) {
    d_mu += mu / nb;
    d_lv += (0.5 / nb) * (lv.array().exp() - 1.0).matrix();
    // The clamp passes no gradient outside its range.
    for (Eigen::Index c = 0; c < b; ++c)
      for (Eigen::Index i = 0; i < j; ++i)
        if (raw_lv(i, c) < -kLogVarClamp || raw_lv(i, c) > kLogVarClamp) d_lv(i, c) = 0.0;
    Matrix g_h(2 * j, b);
    g_h << d_mu, d_lv;
    std::vector<LayerGrad> g;
    model.encoder.backward(enc_tape, g_h, g);
    grad->encoder = std::move(g);
  }
  return out;
}

/// Normalized training pair of one column model.
struct TrainingPair {
  Vector p;       // normalized parameters
  Vector x_norm;  // ln(x + 2) of one coefficient column
};

namespace detail {

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  return m;
}

}  // namespace detail

/// Deterministic sub-seed for column c from a master seed (splitmix64 step).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t c) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (c + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Minibatch Adam on the negative ELBO. The returned model carries the
/// per-epoch mean loss.
inline CvaeModel train(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg, std::size_t column_index = 0) {
  cfg.validate();
  if (pairs.empty()) throw ShapeError("train: no training pairs");
  const Eigen::Index xd = pairs.front().x_norm.size();
  const Eigen::Index pd = pairs.front().p.size();
  for (const auto& pr : pairs) {
    if (pr.x_norm.size() != xd || pr.p.size() != pd) throw ShapeError("train: inconsistent pair dimensions");
    if (!pr.x_norm.allFinite() || !pr.p.allFinite()) throw RangeError("train: non-finite training data");
  }
  std::mt19937_64 rng(cfg.seed);
  CvaeModel model = CvaeModel::create(xd, pd, cfg, rng);
  model.column_index = column_index;
  // Per-entry standardization: the column entries vary by orders of
  // magnitude less than their mean values, which plain MSE on ln(x + 2)
  // cannot resolve.
  Vector mean = Vector::Zero(xd);
  for (const auto& pr : pairs) mean += pr.x_norm;
  mean /= static_cast<double>(pairs.size());
  Vector var = Vector::Zero(xd);
  for (const auto& pr : pairs) var += (pr.x_norm - mean).cwiseAbs2();
  var /= static_cast<double>(pairs.size());
  const double floor = std::max(cfg.scale_floor, cfg.scale_floor * std::sqrt(var.maxCoeff()));
  model.shift = mean;
  model.scale = var.cwiseSqrt().cwiseMax(floor);
  std::vector<Vector> targets;
  targets.reserve(pairs.size());
  for (const auto& pr : pairs) targets.push_back(model.to_network(pr.x_norm));
  Adam enc_opt(model.encoder, cfg.learning_rate);
  Adam dec_opt(model.decoder, cfg.learning_rate);

  const auto n = static_cast<Eigen::Index>(pairs.size());
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  const double decay = cfg.epochs > 1 ? std::pow(cfg.final_learning_rate / cfg.learning_rate, 1.0 / (cfg.epochs - 1)) : 1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(decay, epoch);
    enc_opt.set_learning_rate(lr);
    dec_opt.set_learning_rate(lr);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index cnt = std::min(bs, n - start);
      Matrix x(xd, cnt), p(pd, cnt);
      for (Eigen::Index c = 0; c < cnt; ++c) {
        const auto& pr = pairs[order[static_cast<std::size_t>(start + c)]];
        x.col(c) = targets[order[static_cast<std::size_t>(start + c)]];
        p.col(c) = pr.p;
      }
      std::vector<Matrix> eta;
      for (int v = 0; v < cfg.n_latent_samples; ++v) eta.push_back(detail::standard_normal(model.latent_dim, cnt, rng));
      ModelGrad g;
      const LossValue lv = elbo_loss(model, x, p, eta, &g);
      if (!std::isfinite(lv.loss) || lv.loss > cfg.divergence_limit) {
        model.loss_trace.push_back(lv.loss);
        throw TrainingError("train: loss " + std::to_string(lv.loss) + " diverged at epoch " + std::to_string(epoch) +
                                ", batch starting at " + std::to_string(start) + " (column " +
                                std::to_string(column_index) + ")",
                            model.loss_trace);
      }
      enc_opt.step(model.encoder, g.encoder);
      dec_opt.step(model.decoder, g.decoder);
      sum += lv.loss * static_cast<double>(cnt);
    }
    model.loss_trace.push_back(sum / static_cast<double>(n));
  }
  model.trained = true;
  return model;
}

/// One trained model per coefficient column.
struct ColumnModels {
  std::vector<CvaeModel> columns;
  TrainConfig config;

  std::size_t rank() const { return columns.size(); }
};

/// Train r column models on coefficient matrices X_i (r_global x r) with
/// parameters p_i (normalized). Column c uses sub-seed derive_seed(seed, c).
inline ColumnModels train_columns(const std::vector<Matrix>& xs, const std::vector<Vector>& ps, const TrainConfig& cfg) {
  if (xs.empty() || xs.size() != ps.size()) throw ShapeError("train_columns: need one parameter vector per matrix");
  const auto r = xs.front().cols();
  ColumnModels out;
  out.config = cfg;
  for (Eigen::Index c = 0; c < r; ++c) {
    std::vector<TrainingPair> pairs;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i].cols() != r || xs[i].rows() != xs.front().rows()) throw ShapeError("train_columns: coefficient shapes");
      pairs.push_back({ps[i], normalize_column(xs[i].col(c))});
    }
    TrainConfig col_cfg = cfg;
    col_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(c));
    out.columns.push_back(train(pairs, col_cfg, static_cast<std::size_t>(c)));
  }
  return out;
}

enum class GenerationMode { mean, sampled };

/// Decode a coefficient matrix at p (normalized): z = 0 in mean mode,
/// z ~ N(0, I) drawn from rng in sampled mode.
inline Matrix generate_coefficients(const ColumnModels& models, const Vector& p, GenerationMode mode,
                                    std::mt19937_64* rng = nullptr) {
  if (models.columns.empty()) throw ShapeError("generate_basis: no column models");
  if (mode == GenerationMode::sampled && !rng) throw ConfigError("generate_basis: sampled mode needs a generator");
  const auto& first = models.columns.front();
  Matrix x(first.x_dim, static_cast<Eigen::Index>(models.columns.size()));
  for (std::size_t c = 0; c < models.columns.size(); ++c) {
    const auto& m = models.columns[c];
    if (!m.trained) throw ConfigError("generate_basis: column model " + std::to_string(c) + " is not trained");
    m.check();
    if (p.size() != m.p_dim || m.x_dim != first.x_dim) throw ShapeError("generate_basis: dimension mismatch");
    const Matrix z = mode == GenerationMode::mean ? Matrix::Zero(m.latent_dim, 1)
                                                  : detail::standard_normal(m.latent_dim, 1, *rng);
    const Vector xn = m.from_network(m.decode(z, p).col(0));
    x.col(static_cast<Eigen::Index>(c)) = denormalize_column(xn);
  }
  return x;
}

inline rom::ReductionBasis generate_basis(const ColumnModels& models, const Matrix& v_global, const Vector& p,
                                          GenerationMode mode, std::mt19937_64* rng = nullptr) {
  const Matrix x = generate_coefficients(models, p, mode, rng);
  if (v_global.cols() != x.rows()) throw ShapeError("generate_basis: global basis and coefficients differ");
  rom::ReductionBasis b;
  b.modes = orthonormalize_qr(v_global * x);
  return b;
}

}  // namespace vprom::cvae
