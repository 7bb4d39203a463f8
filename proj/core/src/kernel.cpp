#include "ufcal/kernel.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "ufcal/error.hpp"

namespace ufcal {

namespace {

// Scaled Bernoulli polynomials k_r(t) = B_r(t) / r!.
inline double k1(double t) { return t - 0.5; }
inline double k2(double t) {
  const double a = k1(t);
  return (a * a - 1.0 / 12.0) / 2.0;
}
inline double k4(double t) {
  const double a = k1(t);
  const double a2 = a * a;
  return (a2 * a2 - a2 / 2.0 + 7.0 / 240.0) / 24.0;
}

inline void check_unit(double v) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DomainError("kernel argument " + std::to_string(v) + " outside [0,1]");
  }
}

// Kernel with validated arguments.
inline double sobolev_unchecked(double s, double t) {
  return 1.0 + k1(s) * k1(t) + k2(s) * k2(t) - k4(std::abs(s - t));
}

}  // namespace

double sobolev_kernel_1d(double s, double t) {
  check_unit(s);
  check_unit(t);
  return sobolev_unchecked(s, t);
}

double tensor_kernel(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("tensor_kernel: dimension mismatch " + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()));
  }
  double out = 1.0;
  for (std::size_t j = 0; j < x.size(); ++j) out *= sobolev_kernel_1d(x[j], y[j]);
  return out;
}

double tensor_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  if (x.size() != y.size()) {
    throw ShapeError("tensor_kernel: dimension mismatch " + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()));
  }
  double out = 1.0;
  for (Index j = 0; j < x.size(); ++j) out *= sobolev_kernel_1d(x[j], y[j]);
  return out;
}

MinMaxScaler::MinMaxScaler(VectorXd lower, VectorXd upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) throw ShapeError("scaler bounds differ in length");
  for (Index j = 0; j < lower_.size(); ++j) {
    if (!(upper_[j] > lower_[j])) {
      throw DegenerateError("column " + std::to_string(j) + " is constant; cannot scale");
    }
  }
}

MinMaxScaler MinMaxScaler::fit(std::initializer_list<const MatrixXd*> blocks) {
  Index d = -1;
  VectorXd lo, hi;
  for (const MatrixXd* block : blocks) {
    if (block->rows() == 0) continue;
    if (d < 0) {
      d = block->cols();
      lo = block->colwise().minCoeff().transpose();
      hi = block->colwise().maxCoeff().transpose();
    } else {
      if (block->cols() != d) throw ShapeError("scaler: blocks differ in column count");
      lo = lo.cwiseMin(block->colwise().minCoeff().transpose());
      hi = hi.cwiseMax(block->colwise().maxCoeff().transpose());
    }
  }
  if (d < 0) throw ShapeError("scaler: no rows to fit");
  return MinMaxScaler(std::move(lo), std::move(hi));
}

MatrixXd MinMaxScaler::transform(const MatrixXd& raw, bool clamp) const {
  if (raw.cols() != dim()) throw ShapeError("scaler: column count mismatch");
  MatrixXd out(raw.rows(), raw.cols());
  for (Index j = 0; j < raw.cols(); ++j) {
    const double width = upper_[j] - lower_[j];
    for (Index i = 0; i < raw.rows(); ++i) {
      double v = (raw(i, j) - lower_[j]) / width;
      if (clamp) v = std::clamp(v, 0.0, 1.0);
      out(i, j) = v;
    }
  }
  return out;
}

ScaledDesign minmax_scale(const MatrixXd& raw_a, const MatrixXd& raw_b) {
  if (raw_a.rows() == 0 || raw_b.rows() == 0) throw ShapeError("minmax_scale: empty sample");
  if (raw_a.cols() != raw_b.cols()) throw ShapeError("minmax_scale: column count mismatch");
  ScaledDesign design;
  design.scaler = MinMaxScaler::fit({&raw_a, &raw_b});
  const MatrixXd a = design.scaler.transform(raw_a);
  const MatrixXd b = design.scaler.transform(raw_b);
  const Index d = raw_a.cols();

  // Exact (bitwise) duplicates collapse onto one design row.
  std::map<std::vector<double>, Index> seen;
  std::vector<std::vector<double>> rows;
  auto place = [&](const MatrixXd& src, Index i, Sample tag) {
    std::vector<double> key(static_cast<std::size_t>(d));
    for (Index j = 0; j < d; ++j) key[static_cast<std::size_t>(j)] = src(i, j);
    auto [it, inserted] = seen.emplace(key, static_cast<Index>(rows.size()));
    if (inserted) {
      rows.push_back(std::move(key));
      design.origin.emplace_back();
    }
    design.origin[static_cast<std::size_t>(it->second)].push_back({tag, i});
    return it->second;
  };
  design.a_rows.reserve(static_cast<std::size_t>(a.rows()));
  design.b_rows.reserve(static_cast<std::size_t>(b.rows()));
  for (Index i = 0; i < a.rows(); ++i) design.a_rows.push_back(place(a, i, Sample::A));
  for (Index i = 0; i < b.rows(); ++i) design.b_rows.push_back(place(b, i, Sample::B));

  design.points.resize(static_cast<Index>(rows.size()), d);
  for (Index i = 0; i < design.points.rows(); ++i) {
    for (Index j = 0; j < d; ++j) design.points(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return design;
}

namespace {

// Per-point, per-coordinate k1 and k2 values, validated once.
struct Factors {
  MatrixXd k1v;
  MatrixXd k2v;
};

Factors factors(const MatrixXd& p) {
  Factors f{MatrixXd(p.rows(), p.cols()), MatrixXd(p.rows(), p.cols())};
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) {
      check_unit(p(i, j));
      f.k1v(i, j) = k1(p(i, j));
      f.k2v(i, j) = k2(p(i, j));
    }
  }
  return f;
}

inline double kernel_from_factors(const MatrixXd& pa, const Factors& fa, Index i,
                                  const MatrixXd& pb, const Factors& fb, Index j) {
  double out = 1.0;
  for (Index c = 0; c < pa.cols(); ++c) {
    out *= 1.0 + fa.k1v(i, c) * fb.k1v(j, c) + fa.k2v(i, c) * fb.k2v(j, c) -
           k4(std::abs(pa(i, c) - pb(j, c)));
  }
  return out;
}

}  // namespace

MatrixXd gram_matrix(const MatrixXd& points) {
  const Factors f = factors(points);
  const Index n = points.rows();
  MatrixXd m(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j; i < n; ++i) {
      const double v = kernel_from_factors(points, f, i, points, f, j);
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

MatrixXd gram_matrix(const ScaledDesign& design) { return gram_matrix(design.points); }

MatrixXd cross_gram(const MatrixXd& a, const MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeError("cross_gram: dimension mismatch");
  const Factors fa = factors(a);
  const Factors fb = factors(b);
  MatrixXd m(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) m(i, j) = kernel_from_factors(a, fa, i, b, fb, j);
  }
  return m;
}

void symmetric_eigen(const MatrixXd& m, VectorXd& values, MatrixXd& vectors) {
  const Index n = m.rows();
  vectors = m;
  VectorXd ascending(n);
  if (n > 0) {
    const lapack_int info =
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n), vectors.data(),
                       static_cast<lapack_int>(n), ascending.data());
    if (info != 0) {
      throw ConvergenceError("dsyevd failed with info = " + std::to_string(info));
    }
  }
  values = ascending.reverse();
  vectors = vectors.rowwise().reverse().eval();
}

GramSpectrum eigendecompose(const MatrixXd& m, double cutoff_ratio) {
  if (m.rows() != m.cols()) throw ShapeError("eigendecompose: matrix is not square");
  if (m.rows() == 0) throw DegenerateError("eigendecompose: empty matrix");
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ShapeError("eigendecompose: matrix is not symmetric");
  }
  VectorXd values;
  MatrixXd vectors;
  symmetric_eigen(m, values, vectors);
  const double top = values[0];
  if (!(top > 0.0)) throw DegenerateError("eigendecompose: no positive eigenvalue");
  const double threshold = cutoff_ratio * top;
  Index keep = 0;
  while (keep < values.size() && values[keep] > threshold) ++keep;

  GramSpectrum out;
  out.p1 = vectors.leftCols(keep);
  out.q1 = values.head(keep);
  out.recon_error = values.tail(values.size() - keep).norm();
  return out;
}

double reconstruction_error(const GramSpectrum& spectrum, const MatrixXd& m) {
  const MatrixXd approx = spectrum.p1 * spectrum.q1.asDiagonal() * spectrum.p1.transpose();
  return (approx - m).norm();
}

}  // namespace ufcal
