#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ufcal/calibrate.hpp"
#include "ufcal/error.hpp"

namespace ufcal {

namespace {

// A distinct pole of the secular function with the squared weight of every
// entry sharing it.
struct Pole {
  double d;
  double weight;  // sum of v_i^2 over the group
  int multiplicity;
};

std::vector<Pole> group_poles(std::span<const double> d, std::span<const double> v) {
  std::vector<Pole> poles;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!poles.empty() && poles.back().d == d[i]) {
      poles.back().weight += v[i] * v[i];
      ++poles.back().multiplicity;
    } else {
      poles.push_back({d[i], v[i] * v[i], 1});
    }
  }
  return poles;
}

// Largest root of 1 = rho * sum_i w_i / (lambda - p_i) over the poles with
// positive weight, lambda > top pole. Solved in tau = lambda - p_top with
// Newton on the concave increasing 1/g(tau) - rho, which converges
// monotonically from the left.
double top_root(const std::vector<Pole>& active, double rho) {
  const double top = active.front().d;
  double total = 0.0;
  for (const Pole& p : active) total += p.weight;
  double lo = 0.0;
  double hi = rho * total;

  auto g_and_slope = [&](double tau, double& g, double& dg) {
    g = 0.0;
    dg = 0.0;
    for (const Pole& p : active) {
      const double den = tau + (top - p.d);
      g += p.weight / den;
      dg += p.weight / (den * den);
    }
  };

  // First Newton step from tau = 0, where 1/g ~ tau / w_top.
  double tau = std::min(rho * active.front().weight, hi);
  for (int it = 0; it < 200; ++it) {
    double g, dg;
    g_and_slope(tau, g, dg);
    const double phi = 1.0 / g - rho;
    if (phi < 0.0) {
      lo = std::max(lo, tau);
    } else {
      hi = std::min(hi, tau);
      if (phi == 0.0) return top + tau;
    }
    const double dphi = dg / (g * g);
    double next = tau - phi / dphi;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - tau);
    tau = next;
    if (step <= 1e-15 * tau || hi - lo <= 1e-15 * hi) break;
  }
  return top + tau;
}

// Root of the secular function strictly between two consecutive active
// poles `upper` > `lower`, by bisection in the offset from `lower`.
double interior_root(const std::vector<Pole>& active, std::size_t k, double rho) {
  const double upper = active[k].d;
  const double lower = active[k + 1].d;
  auto f = [&](double offset) {
    const double lambda = lower + offset;
    double s = 0.0;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const double den = (i == k + 1) ? offset : lambda - active[i].d;
      s += active[i].weight / den;
    }
    return 1.0 - rho * s;
  };
  double lo = 0.0;
  double hi = upper - lower;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lower + 0.5 * (lo + hi);
}

void check_inputs(std::span<const double> d, std::span<const double> v, double rho) {
  if (d.size() != v.size()) throw ShapeError("secular: d and v differ in length");
  if (d.empty()) throw DegenerateError("secular: empty spectrum");
  if (!(rho > 0.0)) throw ContractError("secular: rho must be positive");
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i] > d[i - 1]) {
      throw ContractError("secular: d is not sorted nonincreasingly at index " + std::to_string(i));
    }
  }
}

}  // namespace

InnerResult rank_one_top_eigen(std::span<const double> d, std::span<const double> v, double rho) {
  check_inputs(d, v, rho);
  const std::vector<Pole> poles = group_poles(d, v);

  std::vector<Pole> active;
  std::vector<double> candidates;  // every eigenvalue known in closed form
  for (const Pole& p : poles) {
    if (p.weight > 0.0) {
      active.push_back(p);
      for (int r = 1; r < p.multiplicity; ++r) candidates.push_back(p.d);
    } else {
      for (int r = 0; r < p.multiplicity; ++r) candidates.push_back(p.d);
    }
  }

  double top_secular = -std::numeric_limits<double>::infinity();
  if (!active.empty()) {
    top_secular = top_root(active, rho);
    candidates.push_back(top_secular);
    if (active.size() > 1) candidates.push_back(interior_root(active, 0, rho));
  }
  std::sort(candidates.begin(), candidates.end(), std::greater<>());

  InnerResult out;
  out.lambda_max = candidates.front();
  out.second = candidates.size() > 1 ? candidates[1] : -std::numeric_limits<double>::infinity();
  out.beta = VectorXd::Zero(static_cast<Index>(d.size()));
  if (!active.empty() && top_secular >= out.lambda_max) {
    // (lambda - d_i)^{-1} v_i, computed through the offset from the top pole.
    const double tau = top_secular - active.front().d;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (v[i] == 0.0) continue;
      const double den = tau + (active.front().d - d[i]);
      out.beta[static_cast<Index>(i)] = v[i] / den;
    }
    if (!out.beta.allFinite() || out.beta.norm() == 0.0) {
      // tau underflowed: the limit direction is v restricted to the top pole.
      for (std::size_t i = 0; i < d.size(); ++i) {
        out.beta[static_cast<Index>(i)] = d[i] == active.front().d ? v[i] : 0.0;
      }
    }
    out.beta.normalize();
  } else {
    // The top eigenvalue is a deflated pole: its coordinate axis.
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (d[i] == out.lambda_max) {
        out.beta[static_cast<Index>(i)] = 1.0;
        break;
      }
    }
  }
  return out;
}

double secular_max_eig(std::span<const double> d, std::span<const double> v, double rho) {
  return rank_one_top_eigen(d, v, rho).lambda_max;
}

}  // namespace ufcal
