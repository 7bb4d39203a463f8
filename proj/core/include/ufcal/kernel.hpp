#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace ufcal {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Second-order Sobolev reproducing kernel on [0,1] built from scaled
/// Bernoulli polynomials:
///   K(s,t) = 1 + k1(s)k1(t) + k2(s)k2(t) - k4(|s-t|).
/// Throws DomainError when s or t lies outside [0,1].
double sobolev_kernel_1d(double s, double t);

/// Tensor product of sobolev_kernel_1d over coordinates.
double tensor_kernel(std::span<const double> x, std::span<const double> y);

/// Row-vector overload used on design matrices.
double tensor_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     const Eigen::Ref<const Eigen::RowVectorXd>& y);

enum class Sample { A, B };

struct RowOrigin {
  Sample sample;
  Index index;  // row index in the original sample
};

/// Per-column affine map onto [0,1].
class MinMaxScaler {
 public:
  MinMaxScaler() = default;
  MinMaxScaler(VectorXd lower, VectorXd upper);

  /// Fits on the stacked rows of `blocks`. Throws DegenerateError on a
  /// constant column.
  static MinMaxScaler fit(std::initializer_list<const MatrixXd*> blocks);

  /// Maps rows to the unit cube. Points outside the fitted range are
  /// clamped to [0,1] when `clamp` is set.
  MatrixXd transform(const MatrixXd& raw, bool clamp = false) const;

  const VectorXd& lower() const { return lower_; }
  const VectorXd& upper() const { return upper_; }
  Index dim() const { return lower_.size(); }

 private:
  VectorXd lower_;
  VectorXd upper_;
};

/// Pooled A and B covariates mapped to [0,1]^d with exact duplicates
/// merged. Every original row keeps a pointer to its design row.
struct ScaledDesign {
  MatrixXd points;                             // n distinct rows
  MinMaxScaler scaler;
  std::vector<std::vector<RowOrigin>> origin;  // per design row
  std::vector<Index> a_rows;                   // design row of each A unit
  std::vector<Index> b_rows;                   // design row of each B unit

  Index size() const { return points.rows(); }
  Index dim() const { return points.cols(); }
};

ScaledDesign minmax_scale(const MatrixXd& raw_a, const MatrixXd& raw_b);

/// Gram matrix of tensor_kernel over the design rows.
MatrixXd gram_matrix(const MatrixXd& points);
MatrixXd gram_matrix(const ScaledDesign& design);

/// Cross-kernel matrix K(a_i, b_j).
MatrixXd cross_gram(const MatrixXd& a, const MatrixXd& b);

/// Positive part of an eigendecomposition: M ~= P1 diag(Q1) P1^T.
struct GramSpectrum {
  MatrixXd p1;            // n x m, orthonormal columns
  VectorXd q1;            // m positive eigenvalues, nonincreasing
  double recon_error = 0; // Frobenius norm of the discarded part

  Index rank() const { return q1.size(); }
  Index size() const { return p1.rows(); }
};

/// Keeps eigenpairs whose eigenvalue exceeds cutoff_ratio times the largest.
/// `recon_error` is the Frobenius norm of the discarded eigenvalues, which
/// equals the reconstruction error for an exact orthogonal factorization.
/// Throws ShapeError on a non-symmetric input and DegenerateError when no
/// eigenvalue survives the cutoff.
GramSpectrum eigendecompose(const MatrixXd& m, double cutoff_ratio = 1e-12);

/// Frobenius norm of P1 diag(Q1) P1^T - M, computed explicitly.
double reconstruction_error(const GramSpectrum& spectrum, const MatrixXd& m);

/// Full symmetric eigendecomposition, eigenvalues in nonincreasing order.
void symmetric_eigen(const MatrixXd& m, VectorXd& values, MatrixXd& vectors);

}  // namespace ufcal
