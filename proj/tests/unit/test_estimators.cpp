#include <doctest.h>

#include "support.hpp"
#include "ufcal/error.hpp"
#include "ufcal/estimators.hpp"
#include "ufcal/variance.hpp"

using namespace ufcal;

TEST_CASE("method names round-trip and parse loosely") {
  for (Method m : all_methods()) CHECK(parse_method(method_name(m)) == m);
  CHECK(parse_method("ht-kl") == Method::HT_KL);
  CHECK(parse_method("htkl") == Method::HT_KL);
  CHECK(parse_method("PROP") == Method::Prop);
  CHECK_FALSE(parse_method("gam").has_value());
  CHECK(all_methods().size() == 8);
}

TEST_CASE("NSM is the sample mean") {
  VectorXd y(4);
  y << 1, 2, 3, 10;
  CHECK(nsm_value(y) == 4.0);
  CHECK_THROWS_AS(nsm_value(VectorXd()), InputError);
}

TEST_CASE("HT and calibrated forms on hand-computed inputs") {
  MatrixXd xa(2, 1), xb(2, 1);
  xa << 0, 1;
  xb << 0.5, 1;
  VectorXd y(2), d(2), w(2), ma(2), mb(2);
  y << 2, 4;
  d << 3, 5;
  w << 4, 6;
  ma << 1, 5;
  mb << 2, 3;
  const TwoSampleData data = make_two_sample(xa, y, xb, d, 10.0);
  CHECK(ht_estimate(data, w) == doctest::Approx((8.0 + 24.0) / 10.0));
  // (3*2 + 5*3 + 4*(2-1) + 6*(4-5)) / 10
  CHECK(calibrated_estimate(data, w, ma, mb) == doctest::Approx(1.9));
  CHECK_THROWS_AS(ht_estimate(data, VectorXd::Ones(3)), ShapeError);
}

TEST_CASE("DR reduces to the projection form when the linear model is exact") {
  auto data = testing::random_two_sample(40, 30, 2, 5);
  data.y_a = (1.0 + 2.0 * data.x_a.col(0).array() - data.x_a.col(1).array()).matrix();
  const VectorXd mb = (1.0 + 2.0 * data.x_b.col(0).array() - data.x_b.col(1).array()).matrix();
  const double proj = data.d_b.dot(mb);
  const EstimateResult dr1 = dr_estimator(data, 1);
  const EstimateResult dr2 = dr_estimator(data, 2);
  CHECK(dr1.estimate == doctest::Approx(proj / data.population_size).epsilon(1e-9));
  CHECK(dr2.estimate == doctest::Approx(proj / dr2.diagnostics.at("n_hat")).epsilon(1e-9));
}

TEST_CASE("EV estimators: Hajek form and design-weight scale invariance") {
  auto data = testing::random_two_sample(60, 40, 2, 6);
  const EstimateResult ev1 = ev_estimator(data, 1);
  const EstimateResult ev2 = ev_estimator(data, 2);
  const double wsum = ev1.diagnostics.at("weight_sum");
  CHECK(ev1.estimate * data.population_size / wsum == doctest::Approx(ev2.estimate));
  auto scaled = data;
  scaled.d_b *= 3.0;
  CHECK(ev_estimator(scaled, 2).estimate == doctest::Approx(ev2.estimate).epsilon(1e-9));
  CHECK_THROWS_AS(ev_estimator(data, 3), ConfigError);
}

TEST_CASE("Estimation shares pieces and matches the free functions") {
  auto data = testing::random_two_sample(50, 20, 2, 7);
  EstimatorOptions opts;
  opts.lambdas = LambdaSetting::fixed(1e-3, 1e-3);
  Estimation est(data, opts);
  const EstimateResult ht = est.run(Method::HT_KL);
  const EstimateResult pr = est.run(Method::Prop);
  const EstimateResult bs = est.run(Method::BSS);
  const WeightSolution& kl = est.weights(Penalty::KL);
  CHECK(ht.estimate == doctest::Approx(ht_estimate(data, kl.weights)));
  CHECK(pr.estimate == doctest::Approx(calibrated_estimate(data, kl.weights, est.m_hat_a(), est.m_hat_b())));
  CHECK(bs.estimate == doctest::Approx(
                           calibrated_estimate(data, est.weights(Penalty::L2).weights, est.m_hat_a(), est.m_hat_b())));
  CHECK(ht.diagnostics.at("lambda1") == 1e-3);
  CHECK(ht_kl(data, opts).estimate == ht.estimate);
  CHECK(prop(data, opts).estimate == pr.estimate);
  CHECK(bss(data, opts).estimate == bs.estimate);
  for (const auto* r : {&ht, &pr, &bs}) CHECK(r->seconds >= 0.0);

  // Attached variance is the plug-in formula.
  const VectorXd resid = data.y_a - est.m_hat_a();
  const double s2 = sample_variance(std::span<const double>(resid.data(), resid.size()));
  const VarianceResult v = plugin_variance_poisson(data, est.m_hat_b(), kl.weights, s2);
  REQUIRE(pr.variance.has_value());
  CHECK(*pr.variance == doctest::Approx(v.variance));
  CHECK(*pr.ci_high - *pr.ci_low == doctest::Approx(2 * 1.959963984540054 * std::sqrt(v.variance)));
}

TEST_CASE("automatic lambdas come from the default grid") {
  auto data = testing::random_two_sample(30, 12, 2, 8);
  EstimatorOptions opts;
  opts.solver.max_iter = 30;
  Estimation est(data, opts);
  const auto [l1, l2] = est.lambdas();
  const auto grid = default_lambda_grid(data.n_b());
  CHECK(std::find(grid.begin(), grid.end(), l1) != grid.end());
  CHECK(std::find(grid.begin(), grid.end(), l2) != grid.end());
}
