#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"
#include "ufcal/error.hpp"
#include "ufcal/estimators.hpp"
#include "ufcal/kernel.hpp"

using namespace ufcal;

namespace {

// Fold squared error computed by explicit refits on the training rows with
// the full-sample centering and the same n * ridge scaling.
double refit_cv_error(const MatrixXd& points, const VectorXd& y, double ridge,
                      const std::vector<std::vector<Index>>& folds) {
  const Index n = points.rows();
  const VectorXd centered = y.array() - y.mean();
  const MatrixXd k = gram_matrix(points);
  double err = 0.0;
  for (const auto& fold : folds) {
    std::vector<Index> train;
    for (Index i = 0; i < n; ++i)
      if (std::find(fold.begin(), fold.end(), i) == fold.end()) train.push_back(i);
    const Index t = static_cast<Index>(train.size());
    MatrixXd ktt(t, t);
    VectorXd yt(t);
    for (Index a = 0; a < t; ++a) {
      yt[a] = centered[train[a]];
      for (Index b = 0; b < t; ++b) ktt(a, b) = k(train[a], train[b]);
    }
    ktt.diagonal().array() += static_cast<double>(n) * ridge;
    const VectorXd alpha = ktt.ldlt().solve(yt);
    for (Index h : fold) {
      double pred = 0.0;
      for (Index a = 0; a < t; ++a) pred += k(h, train[a]) * alpha[a];
      err += (centered[h] - pred) * (centered[h] - pred);
    }
  }
  return err;
}

}  // namespace

TEST_CASE("constant responses are reproduced exactly") {
  auto engine = make_engine(1);
  const MatrixXd x = testing::uniform_matrix(30, 2, engine, -1.0, 1.0);
  const KernelRidge fit = kernel_ridge_fit(x, VectorXd::Constant(30, 4.25));
  const VectorXd pred = fit.predict(testing::uniform_matrix(10, 2, engine, -1.0, 1.0));
  CHECK((pred.array() - 4.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fit matches a direct linear solve for a single ridge value") {
  auto engine = make_engine(2);
  const MatrixXd x = testing::uniform_matrix(25, 2, engine, 0.0, 3.0);
  const VectorXd y = x.col(0).array().sin() + x.col(1).array();
  KernelRidgeOptions opts;
  opts.ridge_grid = {1e-4};
  const KernelRidge fit = kernel_ridge_fit(x, y, opts);
  const MinMaxScaler scaler = MinMaxScaler::fit({&x});
  const MatrixXd p = scaler.transform(x);
  MatrixXd k = gram_matrix(p);
  k.diagonal().array() += 25 * 1e-4;
  const VectorXd alpha = k.ldlt().solve((y.array() - y.mean()).matrix());
  CHECK((fit.alpha() - alpha).norm() < 1e-8 * alpha.norm());
  const VectorXd expect = gram_matrix(p) * alpha + VectorXd::Constant(25, y.mean());
  CHECK((fit.predict(x) - expect).norm() < 1e-8);
}

TEST_CASE("selected ridge minimizes the refit cross-validation error") {
  auto engine = make_engine(3);
  const MatrixXd x = testing::uniform_matrix(40, 2, engine, 0.0, 1.0);
  std::normal_distribution<double> z(0.0, 0.3);
  VectorXd y(40);
  for (Index i = 0; i < 40; ++i) y[i] = std::cos(4 * x(i, 0)) + x(i, 1) * x(i, 1) + z(engine);

  KernelRidgeOptions opts;
  opts.seed = 17;
  const KernelRidge fit = kernel_ridge_fit(x, y, opts);

  // Same seeded fold assignment as the library.
  std::vector<Index> order(40);
  std::iota(order.begin(), order.end(), Index{0});
  auto fold_engine = make_engine(17, 0x4b52525f666f6c64ULL);
  std::shuffle(order.begin(), order.end(), fold_engine);
  std::vector<std::vector<Index>> folds(5);
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % 5].push_back(order[i]);

  const MatrixXd p = MinMaxScaler::fit({&x}).transform(x);
  double best = std::numeric_limits<double>::infinity(), best_ridge = 0.0;
  for (double r : default_ridge_grid()) {
    const double e = refit_cv_error(p, y, r, folds);
    if (e < best) best = e, best_ridge = r;
  }
  CHECK(fit.ridge() == doctest::Approx(best_ridge).epsilon(1e-12));
}

TEST_CASE("predictions outside the fitted range are clamped") {
  MatrixXd x(5, 1);
  x << 0, 1, 2, 3, 4;
  VectorXd y(5);
  y << 0, 1, 4, 9, 16;
  const KernelRidge fit = kernel_ridge_fit(x, y, {{1e-3}, 5, 0, std::nullopt});
  MatrixXd far(2, 1), edge(2, 1);
  far << -10, 50;
  edge << 0, 4;
  CHECK((fit.predict(far) - fit.predict(edge)).norm() == 0.0);
}

TEST_CASE("invalid ridge options") {
  MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  CHECK_THROWS_AS(kernel_ridge_fit(x, VectorXd::Ones(4)), ConfigError);  // fewer rows than folds
  CHECK_THROWS_AS(kernel_ridge_fit(x, VectorXd::Ones(4), {{}, 2, 0, std::nullopt}), ConfigError);
  CHECK_THROWS_AS(kernel_ridge_fit(x, VectorXd::Ones(4), {{-1.0}, 2, 0, std::nullopt}), ConfigError);
  CHECK_THROWS_AS(kernel_ridge_fit(x, VectorXd::Ones(3), {{1.0}, 2, 0, std::nullopt}), ShapeError);
}
