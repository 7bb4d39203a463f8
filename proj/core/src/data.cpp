#include "ufcal/data.hpp"

#include <cmath>
#include <string>

#include "ufcal/error.hpp"

namespace ufcal {

double estimated_population_size(const VectorXd& d_b) { return d_b.sum(); }

TwoSampleData make_two_sample(MatrixXd x_a, VectorXd y_a, MatrixXd x_b, VectorXd d_b,
                              std::optional<double> population_size) {
  TwoSampleData data;
  data.x_a = std::move(x_a);
  data.y_a = std::move(y_a);
  data.x_b = std::move(x_b);
  data.d_b = std::move(d_b);
  if (population_size) {
    data.population_size = *population_size;
    data.population_size_known = true;
  } else {
    data.population_size = estimated_population_size(data.d_b);
    data.population_size_known = false;
  }
  validate(data);
  return data;
}

void validate(const TwoSampleData& data) {
  if (data.x_a.rows() != data.y_a.size()) {
    throw ShapeError("sample A: " + std::to_string(data.x_a.rows()) + " covariate rows but " +
                     std::to_string(data.y_a.size()) + " responses");
  }
  if (data.x_b.rows() != data.d_b.size()) {
    throw ShapeError("sample B: " + std::to_string(data.x_b.rows()) + " covariate rows but " +
                     std::to_string(data.d_b.size()) + " design weights");
  }
  if (data.x_a.cols() != data.x_b.cols()) {
    throw ShapeError("samples A and B have different covariate counts");
  }
  if (data.x_a.cols() < 1) throw ShapeError("at least one covariate is required");
  if (data.n_a() < 2) throw InputError("sample A needs at least 2 rows");
  if (data.n_b() < 2) throw InputError("sample B needs at least 2 rows");
  if (!data.x_a.allFinite() || !data.y_a.allFinite() || !data.x_b.allFinite() ||
      !data.d_b.allFinite()) {
    throw InputError("non-finite value in input data");
  }
  if ((data.d_b.array() <= 0.0).any()) throw InputError("design weights must be positive");
  if (!(data.population_size > 0.0) || !std::isfinite(data.population_size)) {
    throw InputError("population size must be positive");
  }
}

}  // namespace ufcal
