#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "ufcal/calibrate.hpp"
#include "ufcal/error.hpp"
#include "ufcal/estimators.hpp"
#include "ufcal/rng.hpp"

namespace ufcal {

std::vector<double> default_ridge_grid() { return log_grid(1e-12, 1e-1, 12); }

KernelRidge::KernelRidge(MinMaxScaler scaler, MatrixXd points, VectorXd alpha, double offset,
                         double ridge)
    : scaler_(std::move(scaler)),
      points_(std::move(points)),
      alpha_(std::move(alpha)),
      offset_(offset),
      ridge_(ridge) {}

VectorXd KernelRidge::predict(const MatrixXd& raw) const {
  const MatrixXd scaled = scaler_.transform(raw, /*clamp=*/true);
  return (cross_gram(scaled, points_) * alpha_).array() + offset_;
}

KernelRidge kernel_ridge_fit(const MatrixXd& x, const VectorXd& y,
                             const KernelRidgeOptions& options) {
  const Index n = x.rows();
  if (y.size() != n) throw ShapeError("kernel_ridge_fit: row count mismatch");
  if (options.folds < 2) throw ConfigError("kernel_ridge_fit: need at least 2 folds");
  if (n < options.folds) throw ConfigError("kernel_ridge_fit: fewer rows than folds");
  if (options.ridge_grid.empty()) throw ConfigError("kernel_ridge_fit: empty ridge grid");
  for (double r : options.ridge_grid) {
    if (!(r > 0.0)) throw ConfigError("kernel_ridge_fit: ridge values must be positive");
  }

  MinMaxScaler scaler = options.scaler ? *options.scaler : MinMaxScaler::fit({&x});
  const MatrixXd points = scaler.transform(x, /*clamp=*/true);
  const MatrixXd gram = gram_matrix(points);
  const double offset = y.mean();
  const VectorXd centered = y.array() - offset;

  VectorXd evals;
  MatrixXd evecs;
  symmetric_eigen(gram, evals, evecs);
  evals = evals.cwiseMax(0.0);
  const VectorXd projected = evecs.transpose() * centered;
  const double nn = static_cast<double>(n);

  std::vector<double> grid = options.ridge_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double best_ridge = grid.front();
  if (grid.size() > 1) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    auto engine = make_engine(options.seed, 0x4b52525f666f6c64ULL);
    std::shuffle(order.begin(), order.end(), engine);
    std::vector<std::vector<Index>> folds(static_cast<std::size_t>(options.folds));
    for (std::size_t i = 0; i < order.size(); ++i) {
      folds[i % folds.size()].push_back(order[i]);
    }

    double best_err = std::numeric_limits<double>::infinity();
    for (double ridge : grid) {
      const VectorXd inv = (evals.array() + nn * ridge).inverse();
      const VectorXd alpha = evecs * inv.cwiseProduct(projected);
      double err = 0.0;
      for (const auto& fold : folds) {
        // Held-out residuals: (G_FF)^{-1} alpha_F with G = (M + n ridge I)^{-1}.
        const Index k = static_cast<Index>(fold.size());
        MatrixXd uf(k, n);
        VectorXd af(k);
        for (Index r = 0; r < k; ++r) {
          uf.row(r) = evecs.row(fold[static_cast<std::size_t>(r)]);
          af[r] = alpha[fold[static_cast<std::size_t>(r)]];
        }
        const MatrixXd scaled = uf * inv.cwiseSqrt().asDiagonal();
        const MatrixXd g_ff = scaled * scaled.transpose();
        const Eigen::LLT<MatrixXd> llt(g_ff);
        if (llt.info() != Eigen::Success) throw NumericalError("kernel_ridge_fit: fold system");
        err += llt.solve(af).squaredNorm();
      }
      if (err < best_err) {
        best_err = err;
        best_ridge = ridge;
      }
    }
  }

  const VectorXd inv = (evals.array() + nn * best_ridge).inverse();
  VectorXd alpha = evecs * inv.cwiseProduct(projected);
  if (!alpha.allFinite()) throw NumericalError("kernel_ridge_fit: singular system");
  return KernelRidge(std::move(scaler), points, std::move(alpha), offset, best_ridge);
}

}  // namespace ufcal
