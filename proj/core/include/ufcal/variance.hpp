#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ufcal/calibrate.hpp"
#include "ufcal/data.hpp"

namespace ufcal {

struct VarianceResult {
  double variance = 0.0;
  double design_part = 0.0;
  double residual_part = 0.0;
  std::vector<double> replicates;
  int dropped = 0;
  int negative_draws = 0;
};

/// Sample variance (n - 1 denominator) with pairwise summation.
double sample_variance(std::span<const double> values);

/// Pairwise (cascade) summation.
double pairwise_sum(std::span<const double> values);

/// Plug-in variance of the calibrated estimator under Poisson sampling of B:
///   design   = N^-2 sum_B d_i^2 (1 - 1/d_i) m(x_i)^2
///   residual = sigma2 N^-2 sum_A w_i^2
/// When `residuals` is given the residual part uses N^-2 sum_A w_i^2 e_i^2
/// instead. Throws InputError when any d_i < 1.
VarianceResult plugin_variance_poisson(const TwoSampleData& data, const VectorXd& m_hat_b,
                                       const VectorXd& weights, double sigma2_hat,
                                       const std::optional<VectorXd>& residuals = std::nullopt);

enum class BootstrapTarget { HtKl, Prop };

struct BootstrapOptions {
  int replicates = 200;
  std::uint64_t seed = 0;
  BootstrapTarget target = BootstrapTarget::HtKl;
  /// Replicate solves stop at 100 iterations; past that the estimate moves
  /// by far less than its sampling spread.
  SolverOptions solver = [] {
    SolverOptions s;
    s.max_iter = 100;
    return s;
  }();
  /// Clamp negative draws of d* to 1e-8. Off by default: clamping truncates
  /// the normal law and shrinks the variance by about a quarter when
  /// d(d - 1) is close to d^2.
  bool clamp_negative = false;
  /// Fraction of failed replicates tolerated before giving up.
  double max_drop_fraction = 0.10;
};

/// Bootstrap variance for the KL-calibrated estimator. Each replicate draws
/// d*_i ~ Normal(d_i, d_i (d_i - 1)) independently, re-solves `problem` with
/// d* in place of d_B from r = 1, and records the estimate. Negative draws
/// are kept unless `clamp_negative` is set; `negative_draws` counts them
/// either way. For the Prop target `m_hat_a`/`m_hat_b` enter the
/// calibrated form. Replicate b uses the substream (seed, b), so the result
/// does not depend on evaluation order.
VarianceResult bootstrap_variance(const TwoSampleData& data, const CalibrationProblem& problem,
                                  const BootstrapOptions& options,
                                  const VectorXd* m_hat_a = nullptr,
                                  const VectorXd* m_hat_b = nullptr);

/// Standard normal quantile: rational approximation refined by one Halley
/// step against erfc.
double normal_quantile(double p);

struct Interval {
  double low;
  double high;
};

/// estimate -/+ z_{(1+level)/2} sqrt(variance). Throws ConfigError when
/// level is outside (0,1) and InputError on negative variance.
Interval confidence_interval(double estimate, double variance, double level = 0.95);

}  // namespace ufcal
