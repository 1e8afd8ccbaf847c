#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vprom/error.hpp"
#include "vprom/linalg.hpp"

namespace vprom::cvae {

enum class Activation { identity, tanh, sigmoid };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

/// Fully connected layer y = f(W x + b). Inputs are batched column-wise.
struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }

  Matrix apply(const Matrix& pre) const {
    switch (activation) {
      case Activation::identity: return pre;
      case Activation::tanh: return pre.array().tanh().matrix();
      case Activation::sigmoid: return (1.0 / (1.0 + (-pre.array()).exp())).matrix();
    }
    return pre;
  }

  // Derivative of the activation expressed through its output.
  Matrix derivative(const Matrix& out) const {
    switch (activation) {
      case Activation::identity: return Matrix::Ones(out.rows(), out.cols());
      case Activation::tanh: return (1.0 - out.array().square()).matrix();
      case Activation::sigmoid: return (out.array() * (1.0 - out.array())).matrix();
    }
    return Matrix::Ones(out.rows(), out.cols());
  }
};

struct LayerGrad {
  Matrix weights;
  Vector bias;
};

/// Activations kept from a forward pass for the matching backward pass.
struct Tape {
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { check(); }

  /// Glorot-uniform weights, zero biases; hidden layers share one activation
  /// and the last layer is linear.
  static Mlp build(const std::vector<Eigen::Index>& sizes, Activation hidden, std::mt19937_64& rng) {
    if (sizes.size() < 2) throw ConfigError("Mlp: need at least input and output sizes");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto in = sizes[l];
      const auto out = sizes[l + 1];
      if (in <= 0 || out <= 0) throw ConfigError("Mlp: layer sizes must be positive");
      DenseLayer d;
      d.weights.resize(out, in);
      const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> u(-lim, lim);
      for (Eigen::Index j = 0; j < in; ++j)
        for (Eigen::Index i = 0; i < out; ++i) d.weights(i, j) = u(rng);
      d.bias = Vector::Zero(out);
      d.activation = (l + 2 == sizes.size()) ? Activation::identity : hidden;
      layers.push_back(std::move(d));
    }
    return Mlp(std::move(layers));
  }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Eigen::Index in_dim() const { return layers_.front().in_dim(); }
  Eigen::Index out_dim() const { return layers_.back().out_dim(); }
  bool empty() const { return layers_.empty(); }

  Matrix forward(const Matrix& x, Tape* tape = nullptr) const {
    if (layers_.empty()) throw ShapeError("Mlp: empty network");
    if (x.rows() != in_dim()) throw ShapeError("Mlp::forward: input has " + std::to_string(x.rows()) +
                                               " rows, expected " + std::to_string(in_dim()));
    if (tape) {
      tape->inputs.clear();
      tape->outputs.clear();
    }
    Matrix h = x;
    for (const auto& l : layers_) {
      Matrix pre = l.weights * h;
      pre.colwise() += l.bias;
      Matrix out = l.apply(pre);
      if (tape) {
        tape->inputs.push_back(std::move(h));
        tape->outputs.push_back(out);
      }
      h = std::move(out);
    }
    return h;
  }

  /// Back-propagate dL/d(output). Fills parameter gradients (summed over the
  /// batch) and returns dL/d(input).
  Matrix backward(const Tape& tape, const Matrix& grad_out, std::vector<LayerGrad>& grads) const {
    if (tape.inputs.size() != layers_.size()) throw ShapeError("Mlp::backward: tape does not match network");
    if (grad_out.rows() != out_dim() || grad_out.cols() != tape.outputs.back().cols()) {
      throw ShapeError("Mlp::backward: upstream gradient has the wrong shape");
    }
    grads.resize(layers_.size());
    Matrix g = grad_out;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      const Matrix delta = (g.array() * l.derivative(tape.outputs[k]).array()).matrix();
      grads[k].weights = delta * tape.inputs[k].transpose();
      grads[k].bias = delta.rowwise().sum();
      g = l.weights.transpose() * delta;
    }
    return g;
  }

  std::vector<LayerGrad> zero_grads() const {
    std::vector<LayerGrad> g(layers_.size());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      g[k].weights = Matrix::Zero(layers_[k].out_dim(), layers_[k].in_dim());
      g[k].bias = Vector::Zero(layers_[k].out_dim());
    }
    return g;
  }

  std::size_t n_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

 private:
  void check() const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      if (l.bias.size() != l.out_dim()) throw ShapeError("Mlp: bias length differs from layer output");
      if (k > 0 && l.in_dim() != layers_[k - 1].out_dim()) throw ShapeError("Mlp: consecutive layers do not chain");
      if (!l.weights.allFinite() || !l.bias.allFinite()) throw RangeError("Mlp: non-finite parameters");
    }
  }

  std::vector<DenseLayer> layers_;
};

/// Adam with the usual defaults.
class Adam {
 public:
  Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(net.zero_grads()), v_(net.zero_grads()) {}

  void set_learning_rate(double lr) { lr_ = lr; }

  void step(Mlp& net, const std::vector<LayerGrad>& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    auto& layers = net.layers();
    for (std::size_t k = 0; k < layers.size(); ++k) {
      update(layers[k].weights, g[k].weights, m_[k].weights, v_[k].weights, c1, c2);
      update(layers[k].bias, g[k].bias, m_[k].bias, v_[k].bias, c1, c2);
    }
  }

 private:
  template <class P, class G>
  void update(P& p, const G& g, G& m, G& v, double c1, double c2) const {
    m = b1_ * m + (1.0 - b1_) * g;
    v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<LayerGrad> m_;
  std::vector<LayerGrad> v_;
};

}  // namespace vprom::cvae
