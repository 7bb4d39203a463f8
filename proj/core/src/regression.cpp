#include <cmath>
#include <string>

#include "ufcal/error.hpp"
#include "ufcal/estimators.hpp"

namespace ufcal {

double expit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(t)) without overflow.
double log1pexp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

}  // namespace

MatrixXd with_intercept(const MatrixXd& x) {
  MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

VectorXd fit_ols(const MatrixXd& x, const VectorXd& y) {
  if (x.rows() != y.size()) throw ShapeError("fit_ols: row count mismatch");
  const MatrixXd design = with_intercept(x);
  if (design.rows() < design.cols()) throw InputError("fit_ols: fewer rows than coefficients");
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  if (qr.rank() < design.cols()) throw SingularityError("fit_ols: rank-deficient design");
  return qr.solve(y);
}

VectorXd fit_logistic(const MatrixXd& x, const VectorXd& labels,
                      const std::optional<VectorXd>& weights) {
  if (x.rows() != labels.size()) throw ShapeError("fit_logistic: row count mismatch");
  if (weights && weights->size() != labels.size()) throw ShapeError("fit_logistic: weight length");
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) throw DomainError("fit_logistic: labels must be 0/1");
  }
  const double total = labels.sum();
  if (total == 0.0 || total == static_cast<double>(labels.size())) {
    throw SeparationError("fit_logistic: labels are constant");
  }
  const MatrixXd design = with_intercept(x);
  const Index n = design.rows();
  const Index p = design.cols();
  const VectorXd w = weights ? *weights : VectorXd::Ones(n);

  auto loglik = [&](const VectorXd& beta) {
    const VectorXd eta = design * beta;
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) ll += w[i] * (labels[i] * eta[i] - log1pexp(eta[i]));
    return ll;
  };

  VectorXd beta = VectorXd::Zero(p);
  const double mean = (w.array() * labels.array()).sum() / w.sum();
  beta[0] = std::log(mean / (1.0 - mean));
  double ll = loglik(beta);
  for (int it = 0; it < 50; ++it) {
    const VectorXd eta = design * beta;
    VectorXd score = VectorXd::Zero(p);
    MatrixXd info = MatrixXd::Zero(p, p);
    VectorXd curvature(n);
    VectorXd resid(n);
    for (Index i = 0; i < n; ++i) {
      const double pi = expit(eta[i]);
      resid[i] = w[i] * (labels[i] - pi);
      curvature[i] = w[i] * pi * (1.0 - pi);
    }
    score = design.transpose() * resid;
    info = design.transpose() * curvature.asDiagonal() * design;
    if (score.lpNorm<Eigen::Infinity>() <= 1e-8 * std::max(1.0, w.sum())) {
      // A zero score with every fitted probability at 0 or 1 is a separating
      // hyperplane, not a maximum.
      if (resid.cwiseAbs().maxCoeff() < 1e-6 * w.maxCoeff()) {
        throw SeparationError("fit_logistic: fitted probabilities are all 0 or 1 (separation)");
      }
      return beta;
    }

    const Eigen::LDLT<MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw SeparationError("fit_logistic: singular information matrix");
    }
    const VectorXd step = ldlt.solve(score);
    double t = 1.0;
    VectorXd next = beta + step;
    double next_ll = loglik(next);
    for (int h = 0; h < 30 && !(next_ll >= ll - 1e-12 * std::abs(ll)); ++h) {
      t *= 0.5;
      next = beta + t * step;
      next_ll = loglik(next);
    }
    beta = next;
    ll = next_ll;
    if (beta.cwiseAbs().maxCoeff() > 30.0) {
      throw SeparationError("fit_logistic: coefficient magnitude exceeds 30 (separation)");
    }
  }
  throw SeparationError("fit_logistic: Newton-Raphson did not converge in 50 iterations");
}

VectorXd dr_residual(const TwoSampleData& data, const VectorXd& theta) {
  const MatrixXd xa = with_intercept(data.x_a);
  const MatrixXd xb = with_intercept(data.x_b);
  const VectorXd eta = xb * theta;
  VectorXd coef(eta.size());
  for (Index i = 0; i < eta.size(); ++i) coef[i] = data.d_b[i] * expit(eta[i]);
  return xa.colwise().sum().transpose() - xb.transpose() * coef;
}

DrTheta dr_theta(const TwoSampleData& data, double tol, int max_iter) {
  const MatrixXd xa = with_intercept(data.x_a);
  const MatrixXd xb = with_intercept(data.x_b);
  const VectorXd sum_a = xa.colwise().sum().transpose();
  const double scale = xa.cwiseAbs().rowwise().maxCoeff().sum();
  const Index p = xa.cols();

  // The equation is the gradient of the concave pseudo log-likelihood
  //   L(theta) = sum_A x' theta - sum_B d log(1 + exp(x' theta)).
  auto objective = [&](const VectorXd& theta) {
    const VectorXd eta = xb * theta;
    double s = sum_a.dot(theta);
    for (Index i = 0; i < eta.size(); ++i) s -= data.d_b[i] * log1pexp(eta[i]);
    return s;
  };

  DrTheta out;
  out.theta = VectorXd::Zero(p);
  const double share = std::min(static_cast<double>(data.n_a()) / data.d_b.sum(), 0.9);
  out.theta[0] = std::log(share / (1.0 - share));
  double obj = objective(out.theta);
  for (int it = 0; it <= max_iter; ++it) {
    const VectorXd eta = xb * out.theta;
    VectorXd coef(eta.size()), curv(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      const double pi = expit(eta[i]);
      coef[i] = data.d_b[i] * pi;
      curv[i] = data.d_b[i] * pi * (1.0 - pi);
    }
    const VectorXd residual = sum_a - xb.transpose() * coef;
    out.residual_norm = residual.lpNorm<Eigen::Infinity>();
    out.iterations = it;
    if (out.residual_norm <= tol * scale) return out;
    if (it == max_iter) break;

    // Newton: theta += (sum_B d expit' x x')^{-1} residual.
    const MatrixXd hess = xb.transpose() * curv.asDiagonal() * xb;
    const Eigen::LDLT<MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * ldlt.vectorD().maxCoeff()) {
      throw SingularityError("dr_theta: singular Jacobian");
    }
    const VectorXd step = ldlt.solve(residual);
    double t = 1.0;
    VectorXd next = out.theta + step;
    double next_obj = objective(next);
    for (int h = 0; h < 40 && !(next_obj >= obj - 1e-12 * std::abs(obj)); ++h) {
      t *= 0.5;
      next = out.theta + t * step;
      next_obj = objective(next);
    }
    out.theta = next;
    obj = next_obj;
  }
  throw ConvergenceError("dr_theta: no convergence in " + std::to_string(max_iter) +
                         " iterations (residual " + std::to_string(out.residual_norm) + ")");
}

}  // namespace ufcal
