#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ufcal/calibrate.hpp"
#include "ufcal/error.hpp"
#include "ufcal/rng.hpp"

namespace ufcal {

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) throw ConfigError("log_grid: invalid range");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  if (count == 1) {
    out.push_back(lo);
    return out;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int i = 0; i < count; ++i) out.push_back(std::exp(a + (b - a) * i / (count - 1)));
  return out;
}

std::vector<double> default_lambda_grid(Index n_b) {
  const double nb = static_cast<double>(n_b);
  return log_grid(1e-4 / nb, 1.0 / nb, 7);
}

namespace {

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Mean fitted ratio of the k nearest training units, by Euclidean distance
// in the scaled design.
VectorXd carry_ratios(const MatrixXd& points, const std::vector<Index>& train_rows,
                      const VectorXd& train_gamma, const std::vector<Index>& held_rows, int k) {
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 1)),
                                               train_rows.size());
  VectorXd out(static_cast<Index>(held_rows.size()));
  std::vector<std::pair<double, Index>> dist(train_rows.size());
  for (std::size_t h = 0; h < held_rows.size(); ++h) {
    const auto target = points.row(held_rows[h]);
    for (std::size_t t = 0; t < train_rows.size(); ++t) {
      dist[t] = {(points.row(train_rows[t]) - target).squaredNorm(), static_cast<Index>(t)};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    double s = 0.0;
    for (std::size_t j = 0; j < kk; ++j) s += train_gamma[dist[j].second];
    out[static_cast<Index>(h)] = s / static_cast<double>(kk);
  }
  return out;
}

}  // namespace

CrossValidationResult cross_validate(const CalibrationSetup& setup, const CalibrationProblem& base,
                                     std::vector<double> grid1, std::vector<double> grid2,
                                     const CrossValidationOptions& options) {
  grid1 = sorted_unique(std::move(grid1));
  grid2 = sorted_unique(std::move(grid2));
  if (grid1.empty() || grid2.empty()) throw ConfigError("cross_validate: empty grid");
  if (grid1.front() <= 0.0) throw ConfigError("cross_validate: lambda1 grid must be positive");
  if (grid2.front() < 0.0) throw ConfigError("cross_validate: lambda2 grid must be nonnegative");
  if (options.folds < 2) throw ConfigError("cross_validate: need at least 2 folds");
  const Index n_a = base.n_a();
  if (n_a < options.folds) {
    throw ConfigError("cross_validate: a fold would have zero rows (n_A < folds)");
  }
  validate(base);

  CrossValidationResult result;
  result.grid1 = grid1;
  result.grid2 = grid2;
  if (grid1.size() == 1 && grid2.size() == 1) {
    result.lambda1 = grid1[0];
    result.lambda2 = grid2[0];
    result.criterion = MatrixXd::Zero(1, 1);
    return result;
  }

  // Seeded fold assignment.
  std::vector<Index> order(static_cast<std::size_t>(n_a));
  std::iota(order.begin(), order.end(), Index{0});
  auto engine = make_engine(options.seed, 0x43565f666f6c6473ULL);
  std::shuffle(order.begin(), order.end(), engine);
  std::vector<int> fold_of(static_cast<std::size_t>(n_a));
  for (std::size_t i = 0; i < order.size(); ++i) {
    fold_of[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(options.folds));
  }

  const double eval_lambda1 = grid1[(grid1.size() - 1) / 2];
  result.criterion = MatrixXd::Zero(static_cast<Index>(grid1.size()), static_cast<Index>(grid2.size()));

  for (int f = 0; f < options.folds; ++f) {
    std::vector<Index> train_units, held_units;
    for (Index i = 0; i < n_a; ++i) {
      (fold_of[static_cast<std::size_t>(i)] == f ? held_units : train_units).push_back(i);
    }
    if (held_units.empty() || train_units.empty()) {
      throw ConfigError("cross_validate: fold " + std::to_string(f) + " has zero rows");
    }
    CalibrationProblem train = base;
    train.a_rows.clear();
    for (Index i : train_units) train.a_rows.push_back(base.a_rows[static_cast<std::size_t>(i)]);
    CalibrationProblem held = base;
    held.a_rows.clear();
    for (Index i : held_units) held.a_rows.push_back(base.a_rows[static_cast<std::size_t>(i)]);
    held.lambda1 = eval_lambda1;
    held.lambda2 = 0.0;
    held.population_size = std::max(base.population_size, static_cast<double>(held.n_a()));
    const ObjectiveEvaluator held_eval(held);

    for (std::size_t a = 0; a < grid1.size(); ++a) {
      for (std::size_t b = 0; b < grid2.size(); ++b) {
        train.lambda1 = grid1[a];
        train.lambda2 = grid2[b];
        const WeightSolution sol =
            solve_weights(train, VectorXd::Ones(train.n_a()), options.solver);
        VectorXd held_gamma = carry_ratios(setup.design.points, train.a_rows, sol.gamma,
                                           held.a_rows, options.neighbours);
        result.criterion(static_cast<Index>(a), static_cast<Index>(b)) +=
            held_eval.inner(held_gamma).lambda_max / options.folds;
      }
    }
  }

  Index best_a = 0, best_b = 0;
  for (Index a = 0; a < result.criterion.rows(); ++a) {
    for (Index b = 0; b < result.criterion.cols(); ++b) {
      if (result.criterion(a, b) < result.criterion(best_a, best_b)) {
        best_a = a;
        best_b = b;
      }
    }
  }
  result.lambda1 = grid1[static_cast<std::size_t>(best_a)];
  result.lambda2 = grid2[static_cast<std::size_t>(best_b)];
  return result;
}

}  // namespace ufcal
