#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ufcal/data.hpp"
#include "ufcal/kernel.hpp"

namespace ufcal {

enum class Penalty { KL, L2 };

/// Direction of the KL penalty in the outer objective. `AsWritten`
/// minimizes sup-term - lambda2 * Q_A, `Reversed` minimizes sup-term +
/// lambda2 * Q_A.
enum class KlSign { AsWritten, Reversed };

struct Bounds {
  double lower = 1e-8;
  double upper = 1e8;
};

/// Penalized min-max calibration problem over the density ratios of A.
///
/// The spectrum is the positive part of the pooled Gram matrix; `a_rows`
/// and `b_rows` map every unit of A and B to its design row (units sharing
/// a covariate value share a row).
struct CalibrationProblem {
  std::shared_ptr<const GramSpectrum> spectrum;
  std::vector<Index> a_rows;
  std::vector<Index> b_rows;
  VectorXd d_b;
  double population_size = 0.0;
  double lambda1 = 1e-2;
  double lambda2 = 1e-2;
  Penalty penalty = Penalty::KL;
  KlSign kl_sign = KlSign::AsWritten;
  Bounds bounds;
  /// Extra upper cap on r for the L2 penalty; the effective upper bound is
  /// min(bounds.upper, l2_cap).
  double l2_cap = 1e8;
  /// Accept nonpositive d_b. Only perturbed bootstrap replicates need this;
  /// the objective is defined for any real weights.
  bool signed_weights = false;

  Index n_a() const { return static_cast<Index>(a_rows.size()); }
  Index n_b() const { return static_cast<Index>(b_rows.size()); }
  Index n() const { return spectrum->size(); }
  /// N / n_A - 1, the plug-in for pi0 / pi1.
  double ratio_scale() const { return population_size / static_cast<double>(n_a()) - 1.0; }
  double upper_bound() const;
};

/// Throws on a violated invariant (empty A, bad bounds, nonpositive
/// weights, n_A > N, row indices out of range).
void validate(const CalibrationProblem& problem);

struct WeightSolution {
  VectorXd gamma;    // fitted ratios r_i on A, within bounds
  VectorXd weights;  // 1 + (N/n_A - 1) r_i
  double inner_value = 0.0;
  double objective = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  double grad_norm = 0.0;
  bool eigengap_warning = false;
};

/// Pooled discrepancy vector w(gamma): 1 + (N/n_A - 1) r_i on A rows and
/// -d_B on B rows; rows carrying several units receive the sum.
VectorXd discrepancy_vector(const CalibrationProblem& problem, const VectorXd& gamma);

struct InnerResult {
  double lambda_max = 0.0;
  VectorXd beta;       // unit top eigenvector of B(gamma)
  double second = 0.0; // second largest eigenvalue (-inf when m == 1)
};

/// Largest eigenpair of B(gamma) = (n/N^2) v v^T - n lambda1 Q1^{-1} with
/// v = P1^T w(gamma).
InnerResult inner_value(const CalibrationProblem& problem, const VectorXd& gamma);

/// Largest eigenvalue of diag(d) + rho v v^T for nonincreasing d, via the
/// secular equation 1 + rho sum v_i^2 / (d_i - lambda) = 0. Throws
/// ContractError when d is not sorted nonincreasingly or rho <= 0.
double secular_max_eig(std::span<const double> d, std::span<const double> v, double rho);

/// Top eigenpair and runner-up eigenvalue of diag(d) + rho v v^T.
InnerResult rank_one_top_eigen(std::span<const double> d, std::span<const double> v, double rho);

/// Q_A(gamma) = n_A^{-1} sum r_i (log r_i - 1) + 1.
double kl_penalty(const VectorXd& gamma);

/// Q_2(gamma) = n_A^{-1} sum (1 + (N/n_A - 1) r_i)^2.
double l2_penalty(const VectorXd& gamma, double population_size);

struct ObjectiveResult {
  double value = 0.0;
  double inner = 0.0;
  /// Signed penalty contribution, value == inner + penalty_term.
  double penalty_term = 0.0;
  VectorXd grad;
  bool eigengap_warning = false;
};

ObjectiveResult objective_and_grad(const CalibrationProblem& problem, const VectorXd& gamma);

/// Reusable evaluator caching the rows of P1 that belong to A and the fixed
/// B part of v. Cheaper than the free functions inside iterative loops.
class ObjectiveEvaluator {
 public:
  explicit ObjectiveEvaluator(const CalibrationProblem& problem);

  InnerResult inner(const VectorXd& gamma) const;
  ObjectiveResult evaluate(const VectorXd& gamma, bool with_grad = true) const;
  const CalibrationProblem& problem() const { return *problem_; }

 private:
  VectorXd project(const VectorXd& gamma) const;  // v = P1^T w(gamma)

  const CalibrationProblem* problem_;
  MatrixXd p1_a_;    // n_A x m
  VectorXd v_base_;  // P1^T (w at gamma = 0)
  VectorXd d_;       // -n lambda1 / Q1
  double rho_;
  double scale_;     // N/n_A - 1
};

struct SolverOptions {
  int max_iter = 500;
  double tol = 1e-6;
  /// Armijo parameters.
  double shrink = 0.5;
  double slope = 1e-4;
  double initial_step = 1.0;
  int max_backtracks = 60;
};

/// Projected gradient descent with Armijo backtracking on the box
/// [xi1, xi2]^{n_A}. Trial steps after the first use the Barzilai-Borwein
/// length. Throws InputError when `init` is out of bounds and
/// NumericalError when the objective is not finite at `init`.
WeightSolution solve_weights(const CalibrationProblem& problem, const VectorXd& init,
                             const SolverOptions& options = {});

/// Everything needed to calibrate one TwoSampleData: the scaled design,
/// its Gram spectrum and the unit-to-row maps.
struct CalibrationSetup {
  ScaledDesign design;
  std::shared_ptr<const GramSpectrum> spectrum;
};

CalibrationSetup prepare_calibration(const TwoSampleData& data, double cutoff_ratio = 1e-12);

/// Problem for `data` on a prepared setup.
CalibrationProblem make_problem(const CalibrationSetup& setup, const TwoSampleData& data,
                                double lambda1, double lambda2, Penalty penalty);

struct CrossValidationResult {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  /// Mean held-out criterion per grid point, row-major over (grid1, grid2)
  /// after sorting and deduplicating both grids.
  std::vector<double> grid1;
  std::vector<double> grid2;
  MatrixXd criterion;
};

struct CrossValidationOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  SolverOptions solver;
  int neighbours = 5;
};

/// Five-fold selection of (lambda1, lambda2). For each fold the weights are
/// fitted on the remaining A units against the full B; the fitted ratios
/// are carried to the held-out units by a nearest-neighbour average, and
/// the held-out units (scaled by N / n_holdout) are balanced against B. The
/// criterion is the inner value at a fixed evaluation lambda1 (the median
/// of grid1) so that it is comparable across the grid. Ties go to the
/// smaller lambda1, then the smaller lambda2.
CrossValidationResult cross_validate(const CalibrationSetup& setup, const CalibrationProblem& base,
                                     std::vector<double> grid1, std::vector<double> grid2,
                                     const CrossValidationOptions& options = {});

/// Log-spaced grid of `count` points from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int count);

/// Default grid: 7 points over [1e-4, 1] / n_B.
std::vector<double> default_lambda_grid(Index n_b);

}  // namespace ufcal
