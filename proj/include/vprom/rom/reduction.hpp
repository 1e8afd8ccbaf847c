#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vprom/error.hpp"
#include "vprom/fom/simulate.hpp"
#include "vprom/linalg.hpp"

namespace vprom::rom {

/// Displacement histories of several samples, stacked column-block-wise:
/// S = [U(p_1) U(p_2) ... U(p_Ns)], each block n x N_t.
struct SnapshotSet {
  Matrix matrix;
  Eigen::Index n_dofs = 0;
  Eigen::Index n_steps = 0;
  std::size_t n_samples = 0;

  Eigen::Index n_columns() const { return matrix.cols(); }
  auto block(std::size_t i) const { return matrix.middleCols(static_cast<Eigen::Index>(i) * n_steps, n_steps); }
};

/// Stack snapshot blocks in the given order. Each input is an N_t x n history.
inline SnapshotSet assemble_snapshots(const std::vector<const Matrix*>& histories) {
  if (histories.empty()) throw ShapeError("assemble_snapshots: no solutions");
  SnapshotSet set;
  set.n_steps = histories.front()->rows();
  set.n_dofs = histories.front()->cols();
  set.n_samples = histories.size();
  for (std::size_t i = 0; i < histories.size(); ++i) {
    if (histories[i]->rows() != set.n_steps || histories[i]->cols() != set.n_dofs) {
      throw ShapeError("assemble_snapshots: sample " + std::to_string(i) + " has shape " +
                       std::to_string(histories[i]->rows()) + "x" + std::to_string(histories[i]->cols()) +
                       ", expected " + std::to_string(set.n_steps) + "x" + std::to_string(set.n_dofs));
    }
  }
  set.matrix.resize(set.n_dofs, set.n_steps * static_cast<Eigen::Index>(histories.size()));
  for (std::size_t i = 0; i < histories.size(); ++i) {
    set.matrix.middleCols(static_cast<Eigen::Index>(i) * set.n_steps, set.n_steps) = histories[i]->transpose();
  }
  return set;
}

inline SnapshotSet assemble_snapshots(const std::vector<fom::FomSolution>& solutions) {
  std::vector<const Matrix*> h;
  h.reserve(solutions.size());
  for (const auto& s : solutions) h.push_back(&s.u);
  return assemble_snapshots(h);
}

struct ReductionBasis {
  Matrix modes;                      // n x r, orthonormal columns
  std::vector<double> singular_values;  // retained, descending
  double energy_fraction = 1.0;      // retained / total squared singular values

  Eigen::Index rank() const { return modes.cols(); }
  Eigen::Index n_dofs() const { return modes.rows(); }
};

/// Either a fixed mode count or a retained-energy threshold.
struct Truncation {
  int modes = 0;            // > 0: fixed r
  double energy = 0.9999;   // used when modes == 0

  static Truncation fixed(int r) { return {r, 0.0}; }
  static Truncation by_energy(double e) { return {0, e}; }
};

struct PodResult {
  ReductionBasis basis;
  std::vector<double> all_singular_values;
  Eigen::Index numerical_rank = 0;
  bool clamped = false;  // requested r exceeded the numerical rank
};

/// Left singular vectors of the snapshot matrix, truncated by mode count or
/// by the smallest r whose cumulative squared singular values reach the
/// requested energy fraction. Columns are sign-normalized so that their
/// largest-magnitude entry is positive.
inline PodResult pod(const Matrix& s, Truncation trunc) {
  if (s.size() == 0) throw ShapeError("pod_basis: empty snapshot matrix");
  Eigen::BDCSVD<Matrix> svd(s, Eigen::ComputeThinU);
  const Vector sv = svd.singularValues();
  PodResult out;
  out.all_singular_values.assign(sv.data(), sv.data() + sv.size());
  const double total = sv.squaredNorm();
  const double tol = sv.size() ? sv(0) * std::max(s.rows(), s.cols()) * std::numeric_limits<double>::epsilon() : 0.0;
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > tol) ++rank;
  out.numerical_rank = rank;

  Eigen::Index r = 0;
  if (trunc.modes > 0) {
    r = trunc.modes;
    if (r > rank) {
      r = rank;
      out.clamped = true;
    }
  } else {
    double acc = 0.0;
    while (r < rank) {
      acc += sv(r) * sv(r);
      ++r;
      if (total > 0.0 && acc / total >= trunc.energy) break;
    }
  }
  if (r == 0) throw ShapeError("pod_basis: snapshot matrix has zero numerical rank");
  out.basis.modes = svd.matrixU().leftCols(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::Index imax = 0;
    out.basis.modes.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.basis.modes(imax, j) < 0.0) out.basis.modes.col(j) *= -1.0;
  }
  out.basis.singular_values.assign(sv.data(), sv.data() + r);
  out.basis.energy_fraction = total > 0.0 ? sv.head(r).squaredNorm() / total : 1.0;
  return out;
}

inline ReductionBasis pod_basis(const Matrix& s, Truncation trunc) { return pod(s, trunc).basis; }

/// Coefficients of a local basis in a global one, V_local ~ V_global X.
struct CoefficientMatrix {
  Matrix x;  // r_global x r
};

inline CoefficientMatrix compute_coefficients(const Matrix& v_local, const Matrix& v_global) {
  if (v_local.rows() != v_global.rows()) throw ShapeError("compute_coefficients: row dimensions differ");
  if (v_global.cols() < v_local.cols()) throw ShapeError("compute_coefficients: global basis smaller than local");
  CoefficientMatrix c;
  c.x = v_global.transpose() * v_local;
  return c;
}

/// Flip column signs so the largest-magnitude entry of each column is positive.
inline void canonicalize_column_signs(Matrix& x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::Index imax = 0;
    x.col(j).cwiseAbs().maxCoeff(&imax);
    if (x(imax, j) < 0.0) x.col(j) *= -1.0;
  }
}

}  // namespace vprom::rom
