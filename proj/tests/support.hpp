#pragma once

#include <Eigen/Dense>
#include <random>

#include "ufcal/calibrate.hpp"
#include "ufcal/data.hpp"
#include "ufcal/rng.hpp"

namespace testing {

using ufcal::Index;
using ufcal::MatrixXd;
using ufcal::VectorXd;

inline MatrixXd uniform_matrix(Index rows, Index cols, ufcal::Engine& engine, double lo = 0.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = u(engine);
  return m;
}

inline VectorXd uniform_vector(Index n, ufcal::Engine& engine, double lo, double hi) {
  return uniform_matrix(n, 1, engine, lo, hi).col(0);
}

/// Small random two-sample problem with continuous covariates (no ties).
inline ufcal::TwoSampleData random_two_sample(Index n_a, Index n_b, Index dim,
                                              std::uint64_t seed, double population = 0.0) {
  auto engine = ufcal::make_engine(seed, 99);
  MatrixXd xa = uniform_matrix(n_a, dim, engine, -1.0, 2.0);
  MatrixXd xb = uniform_matrix(n_b, dim, engine, -1.0, 2.0);
  VectorXd y = xa.rowwise().sum() + uniform_vector(n_a, engine, -0.5, 0.5);
  VectorXd d = uniform_vector(n_b, engine, 2.0, 8.0);
  const double n = population > 0 ? population : d.sum() + static_cast<double>(n_a);
  return ufcal::make_two_sample(xa, y, xb, d, n);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace testing
