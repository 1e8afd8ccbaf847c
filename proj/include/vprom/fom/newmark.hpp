#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vprom/error.hpp"
#include "vprom/linalg.hpp"

namespace vprom::fom {

struct NewmarkOptions {
  double beta = 0.25;
  double gamma = 0.5;
  double rel_tol = 1e-8;
  int max_iter = 30;
  int max_halvings = 4;
};

struct IntegrationStats {
  long newton_iterations = 0;
  long halvings = 0;
  long modified_newton_steps = 0;
  double max_residual_ratio = 0.0;  // converged ||R|| / reference, worst step
  double assembly_seconds = 0.0;
  double wall_seconds = 0.0;
};

/// Time histories of one integration run, one row per time step.
struct Trajectory {
  std::vector<double> times;
  Matrix x;
  Matrix v;
  Matrix a;
  IntegrationStats stats;
};

/// Implicit Newmark integration of  M a + C v + g(x) = pattern * ground(t)
/// with Newton-Raphson on every step.
///
/// The model supplies:
///   Eigen::Index dim() const;
///   const Matrix& mass() const;
///   const Matrix* damping() const;              // nullptr when undamped
///   const Matrix& initial_tangent() const;      // modified-Newton fallback
///   const Vector& load_pattern() const;
///   State initial_state() const;
///   void evaluate(const Vector& x, const Vector& x_committed, const State& committed,
///                 State& trial, Vector& g, Matrix& tangent) const;
///
/// A step that fails to converge is retried as two half steps with linearly
/// interpolated load, up to max_halvings levels.
template <class Model>
class NewmarkIntegrator {
 public:
  using State = typename Model::State;
  using CommitHook = std::function<void(std::size_t step, const Vector& x, const State& state)>;

  NewmarkIntegrator(const Model& model, NewmarkOptions options = {}) : model_(model), opt_(options) {}

  Trajectory run(std::span<const double> ground, double dt, const Vector& x0, const Vector& v0,
                 const CommitHook& hook = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    const Eigen::Index n = model_.dim();
    if (x0.size() != n || v0.size() != n) throw ShapeError("NewmarkIntegrator: initial condition size mismatch");
    if (ground.empty()) throw ShapeError("NewmarkIntegrator: empty load history");
    stats_ = {};
    last_error_.clear();
    const std::size_t steps = ground.size();
    Trajectory out;
    out.times.resize(steps);
    out.x.resize(static_cast<Eigen::Index>(steps), n);
    out.v.resize(static_cast<Eigen::Index>(steps), n);
    out.a.resize(static_cast<Eigen::Index>(steps), n);

    Vector x = x0;
    Vector v = v0;
    Vector a(n);
    State state = model_.initial_state();
    {
      State trial = state;
      Vector g(n);
      Matrix k(n, n);
      timed_evaluate(x, x, state, trial, g, k);
      state = trial;
      Vector rhs = model_.load_pattern() * ground[0] - g;
      if (const Matrix* c = model_.damping()) rhs -= *c * v;
      a = model_.mass().partialPivLu().solve(rhs);
    }
    out.times[0] = 0.0;
    out.x.row(0) = x.transpose();
    out.v.row(0) = v.transpose();
    out.a.row(0) = a.transpose();
    if (hook) hook(0, x, state);

    for (std::size_t i = 1; i < steps; ++i) {
      if (!advance(x, v, a, state, ground[i - 1], ground[i], dt, 0)) {
        throw ConvergenceError("Newton-Raphson failed to converge at time step " + std::to_string(i) +
                                   " (t = " + std::to_string(double(i) * dt) + " s) after " +
                                   std::to_string(opt_.max_halvings) + " step halvings" +
                                   (last_error_.empty() ? std::string() : ": " + last_error_),
                               static_cast<long>(i));
      }
      out.times[i] = double(i) * dt;
      const auto row = static_cast<Eigen::Index>(i);
      out.x.row(row) = x.transpose();
      out.v.row(row) = v.transpose();
      out.a.row(row) = a.transpose();
      if (hook) hook(i, x, state);
    }
    stats_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    out.stats = stats_;
    return out;
  }

 private:
  void timed_evaluate(const Vector& x, const Vector& xc, const State& sc, State& trial, Vector& g, Matrix& k) {
    const auto t0 = std::chrono::steady_clock::now();
    model_.evaluate(x, xc, sc, trial, g, k);
    stats_.assembly_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  bool advance(Vector& x, Vector& v, Vector& a, State& state, double g_start, double g_end, double h, int level) {
    if (newton_step(x, v, a, state, g_end, h)) return true;
    if (level >= opt_.max_halvings) return false;
    ++stats_.halvings;
    const double g_mid = 0.5 * (g_start + g_end);
    Vector xs = x, vs = v, as = a;
    State ss = state;
    if (!advance(xs, vs, as, ss, g_start, g_mid, 0.5 * h, level + 1)) return false;
    if (!advance(xs, vs, as, ss, g_mid, g_end, 0.5 * h, level + 1)) return false;
    x = xs;
    v = vs;
    a = as;
    state = ss;
    return true;
  }

  bool newton_step(Vector& x, Vector& v, Vector& a, State& state, double ground_end, double h) {
    const Eigen::Index n = model_.dim();
    const double beta = opt_.beta;
    const double gamma = opt_.gamma;
    const double c0 = 1.0 / (beta * h * h);
    const double c1 = gamma / (beta * h);
    const double c2 = 1.0 / (2.0 * beta) - 1.0;
    const Matrix& m = model_.mass();
    const Matrix* c = model_.damping();
    const Vector f = model_.load_pattern() * ground_end;

    Vector xn = x;
    Vector xt = x;
    Vector at(n), vt(n), g(n), r(n);
    Matrix k(n, n), keff(n, n);
    State trial = state;
    bool modified = false;
    double prev_norm = std::numeric_limits<double>::infinity();
    int stalls = 0;
    for (int it = 0; it <= opt_.max_iter; ++it) {
      at = c0 * (xt - xn - h * v) - c2 * a;
      vt = v + h * ((1.0 - gamma) * a + gamma * at);
      try {
        timed_evaluate(xt, xn, state, trial, g, k);
      } catch (const RangeError& e) {
        last_error_ = e.what();
        return false;
      }
      const Vector inertia = m * at;
      r = f - inertia - g;
      double ref = std::max({f.norm(), inertia.norm(), g.norm()});
      if (c) {
        const Vector damp = *c * vt;
        r -= damp;
        ref = std::max(ref, damp.norm());
      }
      const double rn = r.norm();
      if (!std::isfinite(rn)) return false;
      if (rn <= opt_.rel_tol * ref) {
        stats_.max_residual_ratio = std::max(stats_.max_residual_ratio, ref > 0.0 ? rn / ref : 0.0);
        x = xt;
        v = vt;
        a = at;
        state = trial;
        stats_.newton_iterations += it;
        if (modified) ++stats_.modified_newton_steps;
        return true;
      }
      if (it == opt_.max_iter) break;
      if (rn > 0.9 * prev_norm && it >= 3) {
        if (++stalls >= 2) modified = true;
      }
      prev_norm = rn;
      keff = c0 * m + (modified ? model_.initial_tangent() : k);
      if (c) keff += c1 * *c;
      Eigen::PartialPivLU<Matrix> lu(keff);
      const Vector dx = lu.solve(r);
      if (!dx.allFinite()) return false;
      xt += dx;
    }
    return false;
  }

  const Model& model_;
  NewmarkOptions opt_;
  IntegrationStats stats_;
  std::string last_error_;
};

}  // namespace vprom::fom
