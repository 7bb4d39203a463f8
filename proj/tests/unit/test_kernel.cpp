#include <doctest.h>

#include <numeric>

#include "support.hpp"
#include "ufcal/error.hpp"
#include "ufcal/kernel.hpp"

using namespace ufcal;

namespace {

// Exact rational arithmetic for the kernel oracle.
struct Q {
  __int128 n, d;
  Q(__int128 num = 0, __int128 den = 1) : n(num), d(den) { norm(); }
  void norm() {
    if (d < 0) n = -n, d = -d;
    __int128 a = n < 0 ? -n : n, b = d;
    while (b) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) n /= a, d /= a;
  }
  friend Q operator+(Q a, Q b) { return {a.n * b.d + b.n * a.d, a.d * b.d}; }
  friend Q operator-(Q a, Q b) { return {a.n * b.d - b.n * a.d, a.d * b.d}; }
  friend Q operator*(Q a, Q b) { return {a.n * b.n, a.d * b.d}; }
  double value() const { return static_cast<double>(n) / static_cast<double>(d); }
};

// Bernoulli polynomials expanded in t.
Q bern1(Q t) { return t - Q(1, 2); }
Q bern2(Q t) { return t * t - t + Q(1, 6); }
Q bern4(Q t) { return t * t * t * t - Q(2) * t * t * t + t * t - Q(1, 30); }

Q kernel_oracle(Q s, Q t) {
  Q diff = s - t;
  if (diff.n < 0) diff.n = -diff.n;
  return Q(1) + bern1(s) * bern1(t) + bern2(s) * bern2(t) * Q(1, 4) - bern4(diff) * Q(1, 24);
}

}  // namespace

TEST_CASE("kernel at the origin") {
  CHECK(sobolev_kernel_1d(0.0, 0.0) == doctest::Approx(906.0 / 720.0).epsilon(1e-15));
  CHECK(kernel_oracle(Q(0), Q(0)).n == 151);
  CHECK(kernel_oracle(Q(0), Q(0)).d == 120);
}

TEST_CASE("kernel matches the rational oracle on a grid") {
  for (int den : {4, 7, 12}) {
    for (int a = 0; a <= den; ++a) {
      for (int b = 0; b <= den; ++b) {
        const double expect = kernel_oracle(Q(a, den), Q(b, den)).value();
        const double got = sobolev_kernel_1d(double(a) / den, double(b) / den);
        CHECK(std::abs(got - expect) <= 1e-15 * std::abs(expect));
      }
    }
  }
}

TEST_CASE("kernel rejects arguments outside the unit interval") {
  CHECK_THROWS_AS(sobolev_kernel_1d(-1e-9, 0.5), DomainError);
  CHECK_THROWS_AS(sobolev_kernel_1d(0.5, 1.0 + 1e-12), DomainError);
  CHECK_THROWS_AS(tensor_kernel(std::vector<double>{0.1, 0.2}, std::vector<double>{0.1}), ShapeError);
}

TEST_CASE("tensor kernel is the product of coordinate kernels") {
  const std::vector<double> x{0.25, 0.5, 1.0};
  const std::vector<double> y{0.75, 0.0, 1.0 / 3.0};
  const double expect = kernel_oracle(Q(1, 4), Q(3, 4)).value() *
                        kernel_oracle(Q(1, 2), Q(0)).value() *
                        kernel_oracle(Q(1), Q(1, 3)).value();
  CHECK(tensor_kernel(x, y) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("min-max scaling maps the pooled range onto the unit cube") {
  MatrixXd a(3, 2), b(2, 2);
  a << 0, 10, 2, 20, 4, 15;
  b << 1, 30, 3, 10;
  const ScaledDesign design = minmax_scale(a, b);
  REQUIRE(design.size() == 5);
  CHECK(design.points(design.a_rows[0], 0) == 0.0);
  CHECK(design.points(design.a_rows[2], 0) == 1.0);
  CHECK(design.points(design.b_rows[0], 1) == 1.0);
  CHECK(design.points(design.a_rows[1], 1) == doctest::Approx(0.5));
  CHECK(design.points(design.b_rows[0], 0) == doctest::Approx(0.25));
}

TEST_CASE("exact duplicates share a design row") {
  MatrixXd a(3, 1), b(3, 1);
  a << 0.0, 0.5, 0.5;
  b << 1.0, 0.5, 0.25;
  const ScaledDesign design = minmax_scale(a, b);
  CHECK(design.size() == 4);
  CHECK(design.a_rows[1] == design.a_rows[2]);
  CHECK(design.b_rows[1] == design.a_rows[1]);
  const auto& origin = design.origin[static_cast<std::size_t>(design.a_rows[1])];
  REQUIRE(origin.size() == 3);
  CHECK(origin[2].sample == Sample::B);
  CHECK(origin[2].index == 1);
}

TEST_CASE("constant column is degenerate") {
  MatrixXd a(2, 2), b(2, 2);
  a << 0, 1, 1, 1;
  b << 2, 1, 3, 1;
  CHECK_THROWS_AS(minmax_scale(a, b), DegenerateError);
}

TEST_CASE("scaling is idempotent on unit-cube designs with attained endpoints") {
  auto engine = make_engine(5);
  MatrixXd a = testing::uniform_matrix(6, 3, engine);
  MatrixXd b = testing::uniform_matrix(4, 3, engine);
  a.row(0).setZero();
  b.row(0).setOnes();
  const ScaledDesign design = minmax_scale(a, b);
  for (Index i = 0; i < a.rows(); ++i) CHECK(design.points.row(design.a_rows[i]) == a.row(i));
  for (Index i = 0; i < b.rows(); ++i) CHECK(design.points.row(design.b_rows[i]) == b.row(i));
}

TEST_CASE("gram matrix: exact symmetry and PSD on 50 random designs") {
  auto engine = make_engine(7);
  std::uniform_int_distribution<int> size(2, 30), dim(1, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd p = testing::uniform_matrix(size(engine), dim(engine), engine);
    const MatrixXd m = gram_matrix(p);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * m.trace());
    for (Index i = 0; i < p.rows(); ++i) {
      for (Index j = 0; j < p.rows(); ++j) {
        double k = 1.0;
        for (Index c = 0; c < p.cols(); ++c) k *= sobolev_kernel_1d(p(i, c), p(j, c));
        CHECK(m(i, j) == doctest::Approx(k).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("cross gram agrees with the gram matrix on stacked points") {
  auto engine = make_engine(8);
  const MatrixXd a = testing::uniform_matrix(5, 2, engine);
  const MatrixXd b = testing::uniform_matrix(3, 2, engine);
  MatrixXd both(8, 2);
  both << a, b;
  const MatrixXd g = gram_matrix(both);
  const MatrixXd c = cross_gram(a, b);
  CHECK((c - g.topRightCorner(5, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eigendecomposition: ordering, orthonormality and reconstruction bound") {
  auto engine = make_engine(9);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd m = gram_matrix(testing::uniform_matrix(40, 2, engine));
    const GramSpectrum s = eigendecompose(m);
    REQUIRE(s.rank() > 0);
    for (Index i = 1; i < s.rank(); ++i) CHECK(s.q1[i] <= s.q1[i - 1]);
    CHECK(s.q1.minCoeff() > 1e-12 * s.q1[0]);
    const MatrixXd gram = s.p1.transpose() * s.p1;
    CHECK((gram - MatrixXd::Identity(s.rank(), s.rank())).cwiseAbs().maxCoeff() < 1e-12);
    // Discarded mass plus rounding of the kept part.
    const double bound = s.recon_error + 1e-12 * m.norm();
    CHECK(reconstruction_error(s, m) <= bound);
  }
}

TEST_CASE("eigendecomposition cutoff drops a known null direction") {
  // Rank-two matrix: u u^T + 2 w w^T.
  VectorXd u(3), w(3);
  u << 1, 0, 0;
  w << 0, 1, 1;
  const MatrixXd m = u * u.transpose() + w * w.transpose();
  const GramSpectrum s = eigendecompose(m);
  CHECK(s.rank() == 2);
  CHECK(s.q1[0] == doctest::Approx(2.0));
  CHECK(s.q1[1] == doctest::Approx(1.0));
  CHECK(s.recon_error < 1e-14);
}

TEST_CASE("eigendecomposition input checks") {
  MatrixXd ns(2, 2);
  ns << 1, 0.5, 0.4, 1;
  CHECK_THROWS_AS(eigendecompose(ns), ShapeError);
  CHECK_THROWS_AS(eigendecompose(MatrixXd::Zero(3, 3)), DegenerateError);
  CHECK_THROWS_AS(eigendecompose(-MatrixXd::Identity(3, 3)), DegenerateError);
}
