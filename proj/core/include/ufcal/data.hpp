#pragma once

#include <Eigen/Dense>
#include <optional>

namespace ufcal {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Estimation input: a non-probability sample A with responses and a
/// reference probability sample B with design weights d_B = 1 / pi_B.
struct TwoSampleData {
  MatrixXd x_a;  // n_A x d
  VectorXd y_a;  // n_A
  MatrixXd x_b;  // n_B x d
  VectorXd d_b;  // n_B, design weights
  double population_size = 0.0;
  bool population_size_known = true;

  Index n_a() const { return x_a.rows(); }
  Index n_b() const { return x_b.rows(); }
  Index dim() const { return x_a.cols(); }
};

/// Sum of design weights over B, the Horvitz-Thompson estimate of N.
double estimated_population_size(const VectorXd& d_b);

/// Builds TwoSampleData; when `population_size` is empty, N is replaced by
/// the sum of the design weights and flagged as estimated. Throws
/// InputError on any violated invariant.
TwoSampleData make_two_sample(MatrixXd x_a, VectorXd y_a, MatrixXd x_b, VectorXd d_b,
                              std::optional<double> population_size);

/// Checks the TwoSampleData invariants (d_B > 0, n_A >= 2, n_B >= 2,
/// matching dimensions, finite entries, N > 0).
void validate(const TwoSampleData& data);

}  // namespace ufcal
