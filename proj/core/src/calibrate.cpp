#include "ufcal/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ufcal/error.hpp"

namespace ufcal {

double CalibrationProblem::upper_bound() const {
  return penalty == Penalty::L2 ? std::min(bounds.upper, l2_cap) : bounds.upper;
}

void validate(const CalibrationProblem& problem) {
  if (!problem.spectrum) throw ConfigError("calibration problem has no spectrum");
  if (problem.spectrum->rank() == 0) throw DegenerateError("spectrum has rank 0");
  if (problem.a_rows.empty()) throw InputError("calibration problem has no A units");
  if (problem.d_b.size() != problem.n_b()) {
    throw ShapeError("design weights do not match the B rows");
  }
  const Index n = problem.n();
  for (Index r : problem.a_rows) {
    if (r < 0 || r >= n) throw ShapeError("A row index out of range");
  }
  for (Index r : problem.b_rows) {
    if (r < 0 || r >= n) throw ShapeError("B row index out of range");
  }
  if (!problem.signed_weights && (problem.d_b.array() <= 0.0).any()) {
    throw InputError("design weights must be positive");
  }
  if (!problem.d_b.allFinite()) throw InputError("design weights must be finite");
  if (!(problem.lambda1 > 0.0)) throw ConfigError("lambda1 must be positive");
  if (!(problem.lambda2 >= 0.0)) throw ConfigError("lambda2 must be nonnegative");
  const Bounds& b = problem.bounds;
  if (!(b.lower > 0.0 && b.lower <= 1.0 && b.upper >= 1.0)) {
    throw ConfigError("bounds must satisfy 0 < xi1 <= 1 <= xi2");
  }
  if (problem.penalty == Penalty::L2 && !(problem.l2_cap >= 1.0)) {
    throw ConfigError("L2 cap must be at least 1");
  }
  if (!(problem.population_size >= static_cast<double>(problem.n_a()))) {
    throw InputError("population size is smaller than sample A");
  }
}

VectorXd discrepancy_vector(const CalibrationProblem& problem, const VectorXd& gamma) {
  if (gamma.size() != problem.n_a()) {
    throw ShapeError("gamma has " + std::to_string(gamma.size()) + " entries, expected " +
                     std::to_string(problem.n_a()));
  }
  const double c = problem.ratio_scale();
  VectorXd w = VectorXd::Zero(problem.n());
  for (Index i = 0; i < problem.n_a(); ++i) {
    w[problem.a_rows[static_cast<std::size_t>(i)]] += 1.0 + c * gamma[i];
  }
  for (Index j = 0; j < problem.n_b(); ++j) {
    w[problem.b_rows[static_cast<std::size_t>(j)]] -= problem.d_b[j];
  }
  return w;
}

double kl_penalty(const VectorXd& gamma) {
  if (gamma.size() == 0) throw ShapeError("kl_penalty: empty gamma");
  double s = 0.0;
  for (Index i = 0; i < gamma.size(); ++i) {
    const double r = gamma[i];
    if (!(r > 0.0)) throw DomainError("kl_penalty: nonpositive ratio " + std::to_string(r));
    s += r * (std::log(r) - 1.0);
  }
  return s / static_cast<double>(gamma.size()) + 1.0;
}

double l2_penalty(const VectorXd& gamma, double population_size) {
  if (gamma.size() == 0) throw ShapeError("l2_penalty: empty gamma");
  const double n_a = static_cast<double>(gamma.size());
  const double c = population_size / n_a - 1.0;
  return (1.0 + c * gamma.array()).square().sum() / n_a;
}

ObjectiveEvaluator::ObjectiveEvaluator(const CalibrationProblem& problem) : problem_(&problem) {
  validate(problem);
  const GramSpectrum& s = *problem.spectrum;
  const Index m = s.rank();
  const double n = static_cast<double>(problem.n());
  const double big_n = problem.population_size;
  rho_ = n / (big_n * big_n);
  scale_ = problem.ratio_scale();
  d_ = (-n * problem.lambda1) * s.q1.cwiseInverse();

  p1_a_.resize(problem.n_a(), m);
  for (Index i = 0; i < problem.n_a(); ++i) {
    p1_a_.row(i) = s.p1.row(problem.a_rows[static_cast<std::size_t>(i)]);
  }
  // Part of v that does not depend on gamma: the "1" of each A unit and -d_B.
  v_base_ = p1_a_.colwise().sum().transpose();
  for (Index j = 0; j < problem.n_b(); ++j) {
    v_base_ -= problem.d_b[j] * s.p1.row(problem.b_rows[static_cast<std::size_t>(j)]).transpose();
  }
}

VectorXd ObjectiveEvaluator::project(const VectorXd& gamma) const {
  if (gamma.size() != problem_->n_a()) throw ShapeError("gamma length does not match A");
  return v_base_ + scale_ * (p1_a_.transpose() * gamma);
}

InnerResult ObjectiveEvaluator::inner(const VectorXd& gamma) const {
  const VectorXd v = project(gamma);
  return rank_one_top_eigen(std::span<const double>(d_.data(), static_cast<std::size_t>(d_.size())),
                            std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
                            rho_);
}

ObjectiveResult ObjectiveEvaluator::evaluate(const VectorXd& gamma, bool with_grad) const {
  const CalibrationProblem& p = *problem_;
  const VectorXd v = project(gamma);
  const InnerResult top =
      rank_one_top_eigen(std::span<const double>(d_.data(), static_cast<std::size_t>(d_.size())),
                         std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
                         rho_);
  ObjectiveResult out;
  out.inner = top.lambda_max;
  out.eigengap_warning = (top.lambda_max - top.second) < 1e-10 * std::abs(top.lambda_max);

  const double n_a = static_cast<double>(p.n_a());
  if (p.penalty == Penalty::KL) {
    const double sign = p.kl_sign == KlSign::AsWritten ? -1.0 : 1.0;
    out.penalty_term = p.lambda2 == 0.0 ? 0.0 : sign * p.lambda2 * kl_penalty(gamma);
  } else {
    out.penalty_term = p.lambda2 * l2_penalty(gamma, p.population_size);
  }
  out.value = out.inner + out.penalty_term;
  if (!with_grad) return out;

  const double vb = v.dot(top.beta);
  out.grad = (2.0 * rho_ * vb * scale_) * (p1_a_ * top.beta);
  if (p.lambda2 != 0.0) {
    if (p.penalty == Penalty::KL) {
      const double sign = p.kl_sign == KlSign::AsWritten ? -1.0 : 1.0;
      out.grad.array() += (sign * p.lambda2 / n_a) * gamma.array().log();
    } else {
      out.grad.array() += (2.0 * p.lambda2 * scale_ / n_a) * (1.0 + scale_ * gamma.array());
    }
  }
  return out;
}

InnerResult inner_value(const CalibrationProblem& problem, const VectorXd& gamma) {
  return ObjectiveEvaluator(problem).inner(gamma);
}

ObjectiveResult objective_and_grad(const CalibrationProblem& problem, const VectorXd& gamma) {
  return ObjectiveEvaluator(problem).evaluate(gamma, true);
}

namespace {

VectorXd clamp_box(const VectorXd& x, double lo, double hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

WeightSolution solve_weights(const CalibrationProblem& problem, const VectorXd& init,
                             const SolverOptions& options) {
  const ObjectiveEvaluator eval(problem);
  const double lo = problem.bounds.lower;
  const double hi = problem.upper_bound();
  if (init.size() != problem.n_a()) throw ShapeError("init length does not match A");
  if ((init.array() < lo).any() || (init.array() > hi).any()) {
    throw InputError("init lies outside the bounds");
  }

  WeightSolution sol;
  VectorXd x = init;
  ObjectiveResult cur = eval.evaluate(x);
  if (!std::isfinite(cur.value)) throw NumericalError("objective is not finite at init");
  if (!cur.grad.allFinite()) throw NumericalError("gradient is not finite at init");
  sol.objective_trace.push_back(cur.value);
  sol.eigengap_warning = cur.eigengap_warning;

  auto pg_norm = [&](const VectorXd& pt, const VectorXd& g) {
    return (clamp_box(pt - g, lo, hi) - pt).lpNorm<Eigen::Infinity>();
  };
  sol.grad_norm = pg_norm(x, cur.grad);

  double step = options.initial_step;
  VectorXd prev_x, prev_g;
  int it = 0;
  for (; it < options.max_iter; ++it) {
    if (sol.grad_norm < options.tol) {
      sol.converged = true;
      break;
    }
    if (it > 0) {
      // Barzilai-Borwein length from the last accepted move.
      const VectorXd s = x - prev_x;
      const VectorXd y = cur.grad - prev_g;
      const double sy = s.dot(y);
      const double ss = s.squaredNorm();
      step = (sy > 0.0 && ss > 0.0) ? std::clamp(ss / sy, 1e-12, 1e12) : options.initial_step;
    }

    bool accepted = false;
    VectorXd trial;
    ObjectiveResult next;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      trial = clamp_box(x - step * cur.grad, lo, hi);
      const VectorXd move = trial - x;
      if (move.lpNorm<Eigen::Infinity>() == 0.0) break;
      next = eval.evaluate(trial);
      if (std::isfinite(next.value) && next.grad.allFinite() &&
          next.value <= cur.value + options.slope * cur.grad.dot(move)) {
        accepted = true;
        break;
      }
      step *= options.shrink;
    }
    if (!accepted) break;  // line search stalled; keep the last accepted point

    prev_x = std::move(x);
    prev_g = std::move(cur.grad);
    x = std::move(trial);
    cur = std::move(next);
    sol.objective_trace.push_back(cur.value);
    sol.eigengap_warning = sol.eigengap_warning || cur.eigengap_warning;
    sol.grad_norm = pg_norm(x, cur.grad);
  }
  if (options.max_iter > 0 && !sol.converged && sol.grad_norm < options.tol) sol.converged = true;

  sol.iterations = it;
  sol.gamma = x;
  sol.weights = (1.0 + problem.ratio_scale() * x.array()).matrix();
  sol.inner_value = cur.inner;
  sol.objective = cur.value;
  return sol;
}

CalibrationSetup prepare_calibration(const TwoSampleData& data, double cutoff_ratio) {
  CalibrationSetup setup;
  setup.design = minmax_scale(data.x_a, data.x_b);
  setup.spectrum =
      std::make_shared<const GramSpectrum>(eigendecompose(gram_matrix(setup.design), cutoff_ratio));
  return setup;
}

CalibrationProblem make_problem(const CalibrationSetup& setup, const TwoSampleData& data,
                                double lambda1, double lambda2, Penalty penalty) {
  CalibrationProblem p;
  p.spectrum = setup.spectrum;
  p.a_rows = setup.design.a_rows;
  p.b_rows = setup.design.b_rows;
  p.d_b = data.d_b;
  p.population_size = data.population_size;
  p.lambda1 = lambda1;
  p.lambda2 = lambda2;
  p.penalty = penalty;
  return p;
}

}  // namespace ufcal
