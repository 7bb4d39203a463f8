#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ufcal/data.hpp"
#include "ufcal/estimators.hpp"
#include "ufcal/rng.hpp"

namespace ufcal {

enum class Setup { Linear, Nonlinear };

std::string_view setup_name(Setup setup);
std::optional<Setup> parse_setup(std::string_view name);

struct PopulationSpec {
  Setup setup = Setup::Linear;
  Index population_size = 5000;
  double expected_a = 1000;
  double expected_b = 100;
  std::uint64_t seed = 0;
};

void validate(const PopulationSpec& spec);

struct FinitePopulation {
  MatrixXd x;     // N x 2
  VectorXd y;
  VectorXd m;     // true mean function
  VectorXd pi_a;  // selection probabilities of A
  VectorXd pi_b;  // inclusion probabilities of B
  double ybar = 0.0;
};

/// Draw from N(0,1) restricted to [lo, hi] by rejection.
double truncated_normal(Engine& engine, double lo = -3.0, double hi = 3.0);

/// Beta(3,3) as a ratio of Gamma(3,1) draws.
double beta33(Engine& engine);

/// Scales nonnegative scores proportionally so they sum to `total`.
/// Throws NumericalError naming the count of entries reaching 1.
VectorXd scale_to_total(const VectorXd& scores, double total, std::string_view what);

FinitePopulation gen_population(const PopulationSpec& spec);

/// Independent Bernoulli (Poisson) draws of A and B; redraws up to 10 times
/// when either sample comes out with fewer than 2 units.
TwoSampleData draw_samples(const FinitePopulation& pop, std::uint64_t seed);

struct ReplicateRecord {
  int replicate = 0;
  Method method = Method::NSM;
  bool ok = true;
  double estimate = 0.0;
  double ybar = 0.0;
  double bias = 0.0;
  std::optional<double> variance;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  std::optional<bool> covered;
  std::optional<double> bootstrap_variance;
  double seconds = 0.0;
  Index n_a = 0;
  Index n_b = 0;
  std::string error;
};

struct MonteCarloOptions {
  std::vector<Method> methods;
  int replicates = 1;
  std::uint64_t seed = 0;
  EstimatorOptions estimator;
  /// Bootstrap replicates attached to HT_KL; 0 disables.
  int bootstrap_reps = 0;
  /// Worker threads; 0 picks the hardware concurrency.
  int threads = 0;
};

/// Default fixed regularization for simulation runs: lambda1 = 1 / n_B0 and
/// lambda2 = 1e-4 / n_B0, both on the cross-validation grid. Running the
/// full grid search inside every replicate is too slow for Monte Carlo use.
LambdaSetting simulation_lambdas(const PopulationSpec& spec);

/// Runs every method on a fresh population and sample draw per replicate.
/// Records are ordered by (replicate, method order) regardless of threads.
std::vector<ReplicateRecord> monte_carlo(const PopulationSpec& spec,
                                         const MonteCarloOptions& options);

struct MethodSummary {
  Method method = Method::NSM;
  int runs = 0;
  int failures = 0;
  bool flagged = false;  // more than 5% failures
  double mean_bias = 0.0;
  double bias_se = 0.0;  // Monte Carlo standard error of the mean bias
  double rmse = 0.0;
  double mean_seconds = 0.0;
  std::optional<double> coverage;
  /// (mean bootstrap variance - MC variance) / MC variance.
  std::optional<double> bootstrap_relative_bias;
};

std::vector<MethodSummary> summarize(const std::vector<ReplicateRecord>& records);

/// Replicate CSV. Wall times are machine-dependent, so they are only
/// written when `with_timing` is set; otherwise output is a pure function
/// of the inputs.
std::string records_csv_header(bool with_timing = false);
std::string record_csv_line(const ReplicateRecord& record, bool with_timing = false);

}  // namespace ufcal
