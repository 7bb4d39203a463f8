#include <doctest.h>

#include "support.hpp"
#include "ufcal/calibrate.hpp"
#include "ufcal/error.hpp"

using namespace ufcal;

namespace {

struct Fixture {
  TwoSampleData data = testing::random_two_sample(25, 10, 2, 21);
  CalibrationSetup setup = prepare_calibration(data);
  CalibrationProblem base = make_problem(setup, data, 1.0, 0.0, Penalty::KL);
};

}  // namespace

TEST_CASE("log grid endpoints and spacing") {
  const auto g = log_grid(1e-4, 1.0, 5);
  REQUIRE(g.size() == 5);
  CHECK(g.front() == doctest::Approx(1e-4));
  CHECK(g.back() == doctest::Approx(1.0));
  CHECK(g[1] / g[0] == doctest::Approx(10.0));
  const auto d = default_lambda_grid(100);
  CHECK(d.size() == 7);
  CHECK(d.front() == doctest::Approx(1e-6));
  CHECK(d.back() == doctest::Approx(1e-2));
}

TEST_CASE("singleton grids return their only point") {
  Fixture f;
  const auto r = cross_validate(f.setup, f.base, {0.3}, {0.2});
  CHECK(r.lambda1 == 0.3);
  CHECK(r.lambda2 == 0.2);
}

TEST_CASE("selection is the arg-min of the reported criterion and is seeded") {
  Fixture f;
  CrossValidationOptions opts;
  opts.seed = 4;
  opts.solver.max_iter = 50;
  const std::vector<double> g1{1e-3, 1e-2, 1e-1}, g2{0.0, 1e-2};
  const auto a = cross_validate(f.setup, f.base, g1, g2, opts);
  const auto b = cross_validate(f.setup, f.base, g1, g2, opts);
  CHECK(a.criterion == b.criterion);
  CHECK(a.lambda1 == b.lambda1);
  Index ia, ib;
  const double best = a.criterion.minCoeff(&ia, &ib);
  CHECK(a.criterion(static_cast<Index>(std::find(g1.begin(), g1.end(), a.lambda1) - g1.begin()),
                    static_cast<Index>(std::find(g2.begin(), g2.end(), a.lambda2) - g2.begin())) == best);
}

TEST_CASE("ties go to the smaller lambda1 then the smaller lambda2") {
  Fixture f;
  CrossValidationOptions opts;
  // No iterations: every grid point keeps r = 1 and scores identically.
  opts.solver.max_iter = 0;
  const auto r = cross_validate(f.setup, f.base, {0.5, 0.1, 0.2}, {0.3, 0.1}, opts);
  CHECK(r.lambda1 == 0.1);
  CHECK(r.lambda2 == 0.1);
  CHECK(r.grid1 == std::vector<double>{0.1, 0.2, 0.5});
}

TEST_CASE("invalid grids and folds") {
  Fixture f;
  CHECK_THROWS_AS(cross_validate(f.setup, f.base, {}, {0.1}), ConfigError);
  CHECK_THROWS_AS(cross_validate(f.setup, f.base, {0.0, 0.1}, {0.1}), ConfigError);
  CrossValidationOptions opts;
  opts.folds = 30;
  CHECK_THROWS_AS(cross_validate(f.setup, f.base, {0.1, 0.2}, {0.1}, opts), ConfigError);
}
