#include "ufcal/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "ufcal/error.hpp"
#include "ufcal/variance.hpp"

namespace ufcal {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string lower(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::string_view method_name(Method method) {
  switch (method) {
    case Method::NSM: return "NSM";
    case Method::EV1: return "EV1";
    case Method::EV2: return "EV2";
    case Method::DR1: return "DR1";
    case Method::DR2: return "DR2";
    case Method::HT_KL: return "HT_KL";
    case Method::BSS: return "BSS";
    case Method::Prop: return "Prop";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  const std::string key = lower(name);
  for (Method m : all_methods()) {
    if (lower(method_name(m)) == key) return m;
  }
  return std::nullopt;
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::NSM, Method::EV1,   Method::EV2, Method::DR1,
                                           Method::DR2, Method::HT_KL, Method::BSS, Method::Prop};
  return methods;
}

double nsm_value(const VectorXd& y_a) {
  if (y_a.size() == 0) throw InputError("nsm: sample A is empty");
  return y_a.mean();
}

EstimateResult nsm(const TwoSampleData& data) {
  const auto start = Clock::now();
  EstimateResult out;
  out.method = Method::NSM;
  out.estimate = nsm_value(data.y_a);
  out.seconds = seconds_since(start);
  return out;
}

EstimateResult ev_estimator(const TwoSampleData& data, int version) {
  if (version != 1 && version != 2) throw ConfigError("ev_estimator: version must be 1 or 2");
  validate(data);
  const auto start = Clock::now();
  EstimateResult out;
  out.method = version == 1 ? Method::EV1 : Method::EV2;

  // Design weights predicted at A from a linear fit over B.
  const VectorXd dcoef = fit_ols(data.x_b, data.d_b);
  VectorXd d_tilde = with_intercept(data.x_a) * dcoef;
  int clipped = 0;
  for (Index i = 0; i < d_tilde.size(); ++i) {
    if (d_tilde[i] <= 0.0) {
      d_tilde[i] = 1.0;
      ++clipped;
    }
  }
  if (clipped > 0) {
    out.warnings.push_back(std::to_string(clipped) + " nonpositive predicted design weights clipped to 1");
  }

  // Pooled membership model; p is the probability of belonging to B, so the
  // odds p / (1 - p) turn B design weights into A pseudo-weights.
  const Index na = data.n_a();
  const Index nb = data.n_b();
  MatrixXd pooled(na + nb, data.dim());
  pooled << data.x_a, data.x_b;
  VectorXd labels(na + nb);
  labels.head(na).setZero();
  labels.tail(nb).setOnes();
  const VectorXd coef = fit_logistic(pooled, labels);
  const VectorXd eta = with_intercept(data.x_a) * coef;

  VectorXd w(na);
  for (Index i = 0; i < na; ++i) {
    const double p = expit(eta[i]);
    if (p >= 1.0 - 1e-12) throw NumericalError("ev_estimator: membership odds overflow");
    w[i] = d_tilde[i] * p / (1.0 - p);
  }
  if (version == 1) {
    out.estimate = w.dot(data.y_a) / data.population_size;
  } else {
    out.estimate = w.dot(data.y_a) / w.sum();
  }
  out.diagnostics["clipped_design_weights"] = clipped;
  out.diagnostics["weight_sum"] = w.sum();
  out.seconds = seconds_since(start);
  return out;
}

EstimateResult dr_estimator(const TwoSampleData& data, int version) {
  if (version != 1 && version != 2) throw ConfigError("dr_estimator: version must be 1 or 2");
  validate(data);
  const auto start = Clock::now();
  EstimateResult out;
  out.method = version == 1 ? Method::DR1 : Method::DR2;

  const DrTheta theta = dr_theta(data);
  const VectorXd beta = fit_ols(data.x_a, data.y_a);
  const VectorXd m_a = with_intercept(data.x_a) * beta;
  const VectorXd m_b = with_intercept(data.x_b) * beta;
  const VectorXd eta = with_intercept(data.x_a) * theta.theta;

  double weighted_resid = 0.0;
  double n_hat = 0.0;
  for (Index i = 0; i < data.n_a(); ++i) {
    const double inv_pi = 1.0 / expit(eta[i]);
    weighted_resid += inv_pi * (data.y_a[i] - m_a[i]);
    n_hat += inv_pi;
  }
  const double projected = data.d_b.dot(m_b);
  const double denom = version == 1 ? data.population_size : n_hat;
  out.estimate = (weighted_resid + projected) / denom;
  out.diagnostics["theta_iterations"] = theta.iterations;
  out.diagnostics["theta_residual"] = theta.residual_norm;
  out.diagnostics["n_hat"] = n_hat;
  out.seconds = seconds_since(start);
  return out;
}

double ht_estimate(const TwoSampleData& data, const VectorXd& weights) {
  if (weights.size() != data.n_a()) throw ShapeError("ht_estimate: weight length");
  return weights.dot(data.y_a) / data.population_size;
}

double calibrated_estimate(const TwoSampleData& data, const VectorXd& weights,
                           const VectorXd& m_hat_a, const VectorXd& m_hat_b) {
  if (weights.size() != data.n_a() || m_hat_a.size() != data.n_a()) {
    throw ShapeError("calibrated_estimate: A length mismatch");
  }
  if (m_hat_b.size() != data.n_b()) throw ShapeError("calibrated_estimate: B length mismatch");
  return (data.d_b.dot(m_hat_b) + weights.dot(data.y_a - m_hat_a)) / data.population_size;
}

Estimation::Estimation(TwoSampleData data, EstimatorOptions options)
    : data_(std::move(data)), options_(std::move(options)) {
  validate(data_);
}

const CalibrationSetup& Estimation::setup() {
  if (!setup_) {
    const auto start = Clock::now();
    setup_ = prepare_calibration(data_, options_.cutoff_ratio);
    t_setup_ = seconds_since(start);
  }
  return *setup_;
}

CalibrationProblem Estimation::problem(Penalty penalty) {
  const auto [l1, l2] = lambdas();
  CalibrationProblem p = make_problem(setup(), data_, l1, l2, penalty);
  p.bounds = options_.bounds;
  p.kl_sign = options_.kl_sign;
  p.l2_cap = options_.l2_cap;
  return p;
}

std::pair<double, double> Estimation::lambdas() {
  if (!lambdas_) {
    if (!options_.lambdas.automatic) {
      lambdas_ = {options_.lambdas.lambda1, options_.lambdas.lambda2};
    } else {
      const CalibrationSetup& s = setup();
      const auto start = Clock::now();
      CalibrationProblem base = make_problem(s, data_, 1.0, 0.0, Penalty::KL);
      base.bounds = options_.bounds;
      base.kl_sign = options_.kl_sign;
      const std::vector<double> grid = default_lambda_grid(data_.n_b());
      CrossValidationOptions cv;
      cv.seed = options_.seed;
      cv.solver = options_.solver;
      const CrossValidationResult r = cross_validate(s, base, grid, grid, cv);
      lambdas_ = {r.lambda1, r.lambda2};
      t_lambda_ = seconds_since(start);
    }
  }
  return *lambdas_;
}

const WeightSolution& Estimation::weights(Penalty penalty) {
  auto& slot = penalty == Penalty::KL ? kl_ : l2_;
  if (!slot) {
    const CalibrationProblem p = problem(penalty);
    const auto start = Clock::now();
    slot = solve_weights(p, VectorXd::Ones(p.n_a()), options_.solver);
    (penalty == Penalty::KL ? t_kl_ : t_l2_) = seconds_since(start);
  }
  return *slot;
}

const KernelRidge& Estimation::outcome_model() {
  if (!ridge_) {
    const CalibrationSetup& s = setup();
    const auto start = Clock::now();
    KernelRidgeOptions opts = options_.ridge;
    if (!opts.scaler) opts.scaler = s.design.scaler;
    ridge_ = kernel_ridge_fit(data_.x_a, data_.y_a, opts);
    m_a_ = ridge_->predict(data_.x_a);
    m_b_ = ridge_->predict(data_.x_b);
    t_ridge_ = seconds_since(start);
  }
  return *ridge_;
}

const VectorXd& Estimation::m_hat_a() {
  outcome_model();
  return m_a_;
}

const VectorXd& Estimation::m_hat_b() {
  outcome_model();
  return m_b_;
}

namespace {

void attach_solver(EstimateResult& out, const WeightSolution& sol, std::pair<double, double> lambdas) {
  out.diagnostics["lambda1"] = lambdas.first;
  out.diagnostics["lambda2"] = lambdas.second;
  out.diagnostics["iterations"] = sol.iterations;
  out.diagnostics["converged"] = sol.converged ? 1.0 : 0.0;
  out.diagnostics["grad_norm"] = sol.grad_norm;
  out.diagnostics["inner_value"] = sol.inner_value;
  out.diagnostics["objective"] = sol.objective;
  out.diagnostics["min_weight"] = sol.weights.minCoeff();
  out.diagnostics["max_weight"] = sol.weights.maxCoeff();
  if (sol.eigengap_warning) out.warnings.push_back("nearly degenerate top eigenvalue during solve");
  if (!sol.converged) out.warnings.push_back("weight solver stopped before convergence");
}

}  // namespace

EstimateResult Estimation::run(Method method) {
  EstimateResult out;
  switch (method) {
    case Method::NSM: return nsm(data_);
    case Method::EV1: return ev_estimator(data_, 1);
    case Method::EV2: return ev_estimator(data_, 2);
    case Method::DR1: return dr_estimator(data_, 1);
    case Method::DR2: return dr_estimator(data_, 2);
    case Method::HT_KL: {
      const WeightSolution& sol = weights(Penalty::KL);
      const auto start = Clock::now();
      out.estimate = ht_estimate(data_, sol.weights);
      attach_solver(out, sol, lambdas());
      out.diagnostics["solve_seconds"] = t_kl_;
      out.seconds = seconds_since(start) + t_setup_ + t_lambda_ + t_kl_;
      break;
    }
    case Method::BSS: {
      const WeightSolution& sol = weights(Penalty::L2);
      outcome_model();
      const auto start = Clock::now();
      out.estimate = calibrated_estimate(data_, sol.weights, m_a_, m_b_);
      attach_solver(out, sol, lambdas());
      out.diagnostics["solve_seconds"] = t_l2_;
      out.seconds = seconds_since(start) + t_setup_ + t_lambda_ + t_l2_ + t_ridge_;
      break;
    }
    case Method::Prop: {
      const WeightSolution& sol = weights(Penalty::KL);
      const VectorXd& ma = m_hat_a();
      const VectorXd& mb = m_hat_b();
      const auto start = Clock::now();
      out.estimate = calibrated_estimate(data_, sol.weights, ma, mb);
      attach_solver(out, sol, lambdas());
      out.diagnostics["solve_seconds"] = t_kl_;
      out.diagnostics["ridge"] = ridge_->ridge();
      if (options_.prop_variance) {
        const VectorXd resid = data_.y_a - ma;
        const double sigma2 = sample_variance(std::span<const double>(resid.data(), static_cast<std::size_t>(resid.size())));
        const VarianceResult v = plugin_variance_poisson(
            data_, mb, sol.weights, sigma2,
            options_.per_point_residual_variance ? std::optional<VectorXd>(resid) : std::nullopt);
        const Interval ci = confidence_interval(out.estimate, v.variance, options_.ci_level);
        out.variance = v.variance;
        out.ci_low = ci.low;
        out.ci_high = ci.high;
        out.diagnostics["design_part"] = v.design_part;
        out.diagnostics["residual_part"] = v.residual_part;
      }
      out.seconds = seconds_since(start) + t_setup_ + t_lambda_ + t_kl_ + t_ridge_;
      break;
    }
  }
  out.method = method;
  return out;
}

EstimateResult ht_kl(const TwoSampleData& data, const EstimatorOptions& options) {
  return Estimation(data, options).run(Method::HT_KL);
}

EstimateResult bss(const TwoSampleData& data, const EstimatorOptions& options) {
  return Estimation(data, options).run(Method::BSS);
}

EstimateResult prop(const TwoSampleData& data, const EstimatorOptions& options) {
  return Estimation(data, options).run(Method::Prop);
}

}  // namespace ufcal
