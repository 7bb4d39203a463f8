#include "ufcal/variance.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ufcal/error.hpp"
#include "ufcal/estimators.hpp"
#include "ufcal/rng.hpp"

namespace ufcal {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw InputError("sample_variance: need at least 2 values");
  const double n = static_cast<double>(values.size());
  const double mean = pairwise_sum(values) / n;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
  return pairwise_sum(sq) / (n - 1.0);
}

VarianceResult plugin_variance_poisson(const TwoSampleData& data, const VectorXd& m_hat_b,
                                       const VectorXd& weights, double sigma2_hat,
                                       const std::optional<VectorXd>& residuals) {
  if (m_hat_b.size() != data.n_b()) throw ShapeError("plugin_variance: m_hat length");
  if (weights.size() != data.n_a()) throw ShapeError("plugin_variance: weight length");
  if (!(sigma2_hat >= 0.0)) throw InputError("plugin_variance: sigma2 must be nonnegative");
  for (Index i = 0; i < data.n_b(); ++i) {
    if (data.d_b[i] < 1.0) {
      throw InputError("plugin_variance: design weight below 1 at B row " + std::to_string(i));
    }
  }
  const double n2 = data.population_size * data.population_size;
  VarianceResult out;
  for (Index i = 0; i < data.n_b(); ++i) {
    const double d = data.d_b[i];
    out.design_part += d * d * (1.0 - 1.0 / d) * m_hat_b[i] * m_hat_b[i];
  }
  out.design_part /= n2;
  if (residuals) {
    if (residuals->size() != data.n_a()) throw ShapeError("plugin_variance: residual length");
    out.residual_part = (weights.array().square() * residuals->array().square()).sum() / n2;
  } else {
    out.residual_part = sigma2_hat * weights.squaredNorm() / n2;
  }
  out.variance = out.design_part + out.residual_part;
  return out;
}

VarianceResult bootstrap_variance(const TwoSampleData& data, const CalibrationProblem& problem,
                                  const BootstrapOptions& options, const VectorXd* m_hat_a,
                                  const VectorXd* m_hat_b) {
  if (options.replicates < 2) throw ConfigError("bootstrap: need at least 2 replicates");
  if (problem.d_b.size() != data.n_b()) throw ShapeError("bootstrap: problem does not match data");
  if (options.target == BootstrapTarget::Prop && (!m_hat_a || !m_hat_b)) {
    throw ConfigError("bootstrap: Prop target needs outcome predictions");
  }
  for (Index i = 0; i < data.n_b(); ++i) {
    if (data.d_b[i] < 1.0) throw InputError("bootstrap: design weight below 1");
  }

  VarianceResult out;
  std::vector<double> estimates;
  estimates.reserve(static_cast<std::size_t>(options.replicates));
  for (int b = 0; b < options.replicates; ++b) {
    Engine engine = make_engine(options.seed, 0x626f6f74ULL, static_cast<std::uint64_t>(b));
    std::normal_distribution<double> normal(0.0, 1.0);
    CalibrationProblem rep = problem;
    rep.signed_weights = !options.clamp_negative;
    for (Index i = 0; i < rep.d_b.size(); ++i) {
      const double d = data.d_b[i];
      double draw = d + std::sqrt(d * (d - 1.0)) * normal(engine);
      if (draw < 1e-8) {
        ++out.negative_draws;
        if (options.clamp_negative) draw = 1e-8;
      }
      rep.d_b[i] = draw;
    }
    try {
      const WeightSolution sol = solve_weights(rep, VectorXd::Ones(rep.n_a()), options.solver);
      double est = ht_estimate(data, sol.weights);
      if (options.target == BootstrapTarget::Prop) {
        est = (rep.d_b.dot(*m_hat_b) + sol.weights.dot(data.y_a - *m_hat_a)) / data.population_size;
      }
      if (!std::isfinite(est)) throw NumericalError("non-finite replicate");
      estimates.push_back(est);
    } catch (const NumericalError&) {
      ++out.dropped;
    }
  }
  if (out.dropped > options.max_drop_fraction * options.replicates) {
    throw NumericalError("bootstrap: " + std::to_string(out.dropped) + " of " +
                         std::to_string(options.replicates) + " replicates failed");
  }
  out.variance = sample_variance(estimates);
  out.replicates = std::move(estimates);
  return out;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p outside (0,1)");
  // Acklam's rational approximation (relative error ~1.2e-9).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley step.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

Interval confidence_interval(double estimate, double variance, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0,1)");
  if (!(variance >= 0.0)) throw InputError("variance must be nonnegative");
  const double half = normal_quantile(0.5 * (1.0 + level)) * std::sqrt(variance);
  return {estimate - half, estimate + half};
}

}  // namespace ufcal
