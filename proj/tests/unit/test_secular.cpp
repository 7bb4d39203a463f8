#include <doctest.h>

#include <algorithm>

#include "support.hpp"
#include "ufcal/calibrate.hpp"
#include "ufcal/error.hpp"

using namespace ufcal;

namespace {

struct Instance {
  std::vector<double> d, v;
  double rho;
};

// Random diagonal-plus-rank-one instance; some draws carry repeated poles and
// zero components to exercise deflation.
Instance random_instance(Engine& engine) {
  std::uniform_int_distribution<int> size(1, 40);
  std::uniform_real_distribution<double> u(-5.0, 0.0), coin(0.0, 1.0);
  std::normal_distribution<double> z;
  Instance in;
  const int m = size(engine);
  in.d.resize(static_cast<std::size_t>(m));
  in.v.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    in.d[static_cast<std::size_t>(i)] = u(engine);
    in.v[static_cast<std::size_t>(i)] = z(engine);
    if (coin(engine) < 0.1) in.v[static_cast<std::size_t>(i)] = 0.0;
  }
  std::sort(in.d.begin(), in.d.end(), std::greater<>());
  for (int i = 1; i < m; ++i)
    if (coin(engine) < 0.1) in.d[static_cast<std::size_t>(i)] = in.d[static_cast<std::size_t>(i - 1)];
  in.rho = std::exp(std::uniform_real_distribution<double>(-4.0, 4.0)(engine));
  return in;
}

Eigen::VectorXd dense_eigenvalues(const Instance& in) {
  const Index m = static_cast<Index>(in.d.size());
  const Eigen::Map<const VectorXd> d(in.d.data(), m), v(in.v.data(), m);
  MatrixXd a = d.asDiagonal();
  a += in.rho * v * v.transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
  return es.eigenvalues().reverse();
}

}  // namespace

TEST_CASE("top eigenvalue matches the dense solver on 200 random instances") {
  auto engine = make_engine(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance in = random_instance(engine);
    const VectorXd ev = dense_eigenvalues(in);
    const double got = secular_max_eig(in.d, in.v, in.rho);
    CHECK(std::abs(got - ev[0]) <= 1e-10 * std::max(std::abs(ev[0]), 1e-3));
  }
}

TEST_CASE("top eigenvector and runner-up eigenvalue") {
  auto engine = make_engine(77);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(engine);
    const Index m = static_cast<Index>(in.d.size());
    const VectorXd ev = dense_eigenvalues(in);
    const InnerResult r = rank_one_top_eigen(in.d, in.v, in.rho);
    const Eigen::Map<const VectorXd> d(in.d.data(), m), v(in.v.data(), m);
    MatrixXd a = d.asDiagonal();
    a += in.rho * v * v.transpose();
    CHECK(r.beta.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const double scale = a.cwiseAbs().maxCoeff();
    CHECK((a * r.beta - r.lambda_max * r.beta).norm() <= 1e-9 * scale);
    if (m > 1) CHECK(std::abs(r.second - ev[1]) <= 1e-9 * scale);
  }
}

TEST_CASE("closed-form 2x2 instance") {
  // diag(0, -1) + v v^T with v = (1, 1): eigenvalues (1 +/- sqrt(5)) / 2 - 0 shift.
  const std::vector<double> d{0.0, -1.0}, v{1.0, 1.0};
  const double top = secular_max_eig(d, v, 1.0);
  CHECK(top == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-14));
}

TEST_CASE("zero rank-one term returns the top pole") {
  const std::vector<double> d{-1.0, -2.0, -3.0}, v{0.0, 0.0, 0.0};
  const InnerResult r = rank_one_top_eigen(d, v, 2.0);
  CHECK(r.lambda_max == -1.0);
  CHECK(r.second == -2.0);
  CHECK(std::abs(r.beta[0]) == 1.0);
}

TEST_CASE("a deflated pole above the secular root wins") {
  // v has no weight on the top pole and only a tiny push on the rest.
  const std::vector<double> d{0.0, -10.0}, v{0.0, 0.1};
  const InnerResult r = rank_one_top_eigen(d, v, 1.0);
  CHECK(r.lambda_max == 0.0);
  CHECK(r.second == doctest::Approx(-10.0 + 0.01).epsilon(1e-3));
}

TEST_CASE("contract violations") {
  const std::vector<double> unsorted{-2.0, -1.0}, v{1.0, 1.0};
  CHECK_THROWS_AS(secular_max_eig(unsorted, v, 1.0), ContractError);
  const std::vector<double> d{-1.0, -2.0};
  CHECK_THROWS_AS(secular_max_eig(d, v, 0.0), ContractError);
  CHECK_THROWS_AS(secular_max_eig(d, std::vector<double>{1.0}, 1.0), ShapeError);
}

TEST_CASE("a top pole with negligible weight still gives a unit eigenvector") {
  // The root offset from the top pole underflows to zero.
  const std::vector<double> d{1.0, 0.0}, v{1e-160, 1.0};
  const InnerResult r = rank_one_top_eigen(d, v, 0.5);
  CHECK(r.lambda_max == 1.0);
  REQUIRE(r.beta.allFinite());
  CHECK(r.beta.norm() == doctest::Approx(1.0));
  CHECK(std::abs(r.beta[0]) == doctest::Approx(1.0));
}
