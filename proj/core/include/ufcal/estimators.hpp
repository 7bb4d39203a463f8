#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ufcal/calibrate.hpp"
#include "ufcal/data.hpp"
#include "ufcal/kernel.hpp"

namespace ufcal {

enum class Method { NSM, EV1, EV2, DR1, DR2, HT_KL, BSS, Prop };

std::string_view method_name(Method method);
/// Case-insensitive; accepts "ht_kl"/"htkl" and friends. Empty on failure.
std::optional<Method> parse_method(std::string_view name);
const std::vector<Method>& all_methods();

struct EstimateResult {
  Method method = Method::NSM;
  double estimate = 0.0;
  std::optional<double> variance;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  double seconds = 0.0;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Regression helpers.

/// Ordinary least squares with an intercept; returns (intercept, slopes...).
VectorXd fit_ols(const MatrixXd& x, const VectorXd& y);

/// Prepends a column of ones.
MatrixXd with_intercept(const MatrixXd& x);

/// Logistic regression by Newton-Raphson with an intercept appended.
/// Optional case weights scale each row's log-likelihood contribution.
/// Throws SeparationError when labels are constant, when any coefficient
/// exceeds 30 in magnitude, or when Newton fails to converge in 50 steps.
VectorXd fit_logistic(const MatrixXd& x, const VectorXd& labels,
                      const std::optional<VectorXd>& weights = std::nullopt);

double expit(double t);

struct DrTheta {
  VectorXd theta;  // (intercept, slopes...)
  int iterations = 0;
  double residual_norm = 0.0;  // infinity norm of the estimating equation
};

/// Solves sum_A x_i - sum_B d_i expit(x_i' theta) x_i = 0 by damped Newton.
DrTheta dr_theta(const TwoSampleData& data, double tol = 1e-8, int max_iter = 50);

/// Estimating-equation residual at theta (x carries an intercept).
VectorXd dr_residual(const TwoSampleData& data, const VectorXd& theta);

// ---------------------------------------------------------------------------
// Kernel ridge regression in the tensor Sobolev space.

/// m(x) = mean(y) + sum_j alpha_j K(x_j, x) with
/// alpha = (M + n ridge I)^{-1} (y - mean(y)).
class KernelRidge {
 public:
  KernelRidge(MinMaxScaler scaler, MatrixXd points, VectorXd alpha, double offset, double ridge);

  /// Evaluates at raw covariate rows; rows outside the fitted range are
  /// clamped onto the unit cube.
  VectorXd predict(const MatrixXd& raw) const;
  double ridge() const { return ridge_; }
  double offset() const { return offset_; }
  const VectorXd& alpha() const { return alpha_; }

 private:
  MinMaxScaler scaler_;
  MatrixXd points_;
  VectorXd alpha_;
  double offset_;
  double ridge_;
};

/// Seven log-spaced ridge values over [1e-7, 1e-1].
std::vector<double> default_ridge_grid();

struct KernelRidgeOptions {
  std::vector<double> ridge_grid = default_ridge_grid();
  int folds = 5;
  std::uint64_t seed = 0;
  /// Scaler to map raw covariates; fitted on x when empty.
  std::optional<MinMaxScaler> scaler;
};

/// Picks the ridge from the grid by k-fold squared-error cross-validation
/// and refits on all rows. Fold residuals come from one eigendecomposition
/// through the block-inverse identity, sharing the full-sample centering.
KernelRidge kernel_ridge_fit(const MatrixXd& x, const VectorXd& y,
                             const KernelRidgeOptions& options = {});

// ---------------------------------------------------------------------------
// Estimators.

/// Regularization choice for the calibrated estimators.
struct LambdaSetting {
  bool automatic = true;
  double lambda1 = 0.0;
  double lambda2 = 0.0;

  static LambdaSetting fixed(double l1, double l2) { return {false, l1, l2}; }
  static LambdaSetting cross_validated() { return {true, 0.0, 0.0}; }
};

struct EstimatorOptions {
  LambdaSetting lambdas = LambdaSetting::cross_validated();
  Bounds bounds;
  KlSign kl_sign = KlSign::AsWritten;
  /// C_N, the extra upper cap of the L2 (BSS) problem.
  double l2_cap = 1e8;
  SolverOptions solver;
  double cutoff_ratio = 1e-12;
  std::uint64_t seed = 0;  // cross-validation folds
  KernelRidgeOptions ridge;
  /// Attach the plug-in variance and a 95% interval to Prop.
  bool prop_variance = true;
  bool per_point_residual_variance = false;
  double ci_level = 0.95;
};

double nsm_value(const VectorXd& y_a);
EstimateResult nsm(const TwoSampleData& data);
EstimateResult ev_estimator(const TwoSampleData& data, int version);
EstimateResult dr_estimator(const TwoSampleData& data, int version);

/// N^{-1} sum_A w_i y_i.
double ht_estimate(const TwoSampleData& data, const VectorXd& weights);

/// N^{-1} sum_B d_i m(x_i) + N^{-1} sum_A w_i (y_i - m(x_i)).
double calibrated_estimate(const TwoSampleData& data, const VectorXd& weights,
                           const VectorXd& m_hat_a, const VectorXd& m_hat_b);

/// Lazily shares the expensive pieces (Gram spectrum, lambda selection,
/// weight solves, outcome model) across the calibrated estimators on one
/// data set. Per-method timings charge each method for every piece it
/// uses, independent of evaluation order.
class Estimation {
 public:
  Estimation(TwoSampleData data, EstimatorOptions options = {});

  const TwoSampleData& data() const { return data_; }
  const EstimatorOptions& options() const { return options_; }

  const CalibrationSetup& setup();
  /// Resolved (lambda1, lambda2); runs cross-validation when automatic.
  std::pair<double, double> lambdas();
  CalibrationProblem problem(Penalty penalty);
  const WeightSolution& weights(Penalty penalty);
  const KernelRidge& outcome_model();
  const VectorXd& m_hat_a();
  const VectorXd& m_hat_b();

  EstimateResult run(Method method);

 private:
  using Clock = std::chrono::steady_clock;

  TwoSampleData data_;
  EstimatorOptions options_;
  std::optional<CalibrationSetup> setup_;
  std::optional<std::pair<double, double>> lambdas_;
  std::optional<WeightSolution> kl_;
  std::optional<WeightSolution> l2_;
  std::optional<KernelRidge> ridge_;
  VectorXd m_a_, m_b_;
  double t_setup_ = 0, t_lambda_ = 0, t_kl_ = 0, t_l2_ = 0, t_ridge_ = 0;
};

EstimateResult ht_kl(const TwoSampleData& data, const EstimatorOptions& options = {});
EstimateResult bss(const TwoSampleData& data, const EstimatorOptions& options = {});
EstimateResult prop(const TwoSampleData& data, const EstimatorOptions& options = {});

}  // namespace ufcal
