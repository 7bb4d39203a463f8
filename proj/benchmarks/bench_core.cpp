#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ufcal/calibrate.hpp"
#include "ufcal/kernel.hpp"
#include "ufcal/rng.hpp"
#include "ufcal/simulate.hpp"

namespace {

ufcal::MatrixXd uniform_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  auto engine = ufcal::make_engine(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ufcal::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = u(engine);
  return x;
}

void BM_GramMatrix(benchmark::State& state) {
  const auto x = uniform_points(state.range(0), 2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ufcal::gram_matrix(x));
}
BENCHMARK(BM_GramMatrix)->Arg(200)->Arg(500)->Arg(1100)->Unit(benchmark::kMillisecond);

void BM_Eigendecompose(benchmark::State& state) {
  const auto g = ufcal::gram_matrix(uniform_points(state.range(0), 2, 2));
  for (auto _ : state) benchmark::DoNotOptimize(ufcal::eigendecompose(g));
}
BENCHMARK(BM_Eigendecompose)->Arg(200)->Arg(500)->Arg(1100)->Unit(benchmark::kMillisecond);

void BM_SecularMaxEig(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  auto engine = ufcal::make_engine(3);
  std::normal_distribution<double> z;
  std::vector<double> d(m), v(m);
  for (std::size_t i = 0; i < m; ++i) {
    d[i] = -static_cast<double>(i + 1);
    v[i] = z(engine);
  }
  for (auto _ : state) benchmark::DoNotOptimize(ufcal::rank_one_top_eigen(d, v, 0.5));
}
BENCHMARK(BM_SecularMaxEig)->Arg(100)->Arg(1000);

void BM_SolveWeights(benchmark::State& state) {
  ufcal::PopulationSpec spec;
  spec.population_size = 2000;
  spec.expected_a = 400;
  spec.expected_b = 60;
  spec.seed = 4;
  const auto pop = ufcal::gen_population(spec);
  const auto data = ufcal::draw_samples(pop, 5);
  const auto setup = ufcal::prepare_calibration(data);
  const auto lambdas = ufcal::simulation_lambdas(spec);
  const auto penalty = state.range(0) == 0 ? ufcal::Penalty::KL : ufcal::Penalty::L2;
  const auto problem = ufcal::make_problem(setup, data, lambdas.lambda1, lambdas.lambda2, penalty);
  for (auto _ : state)
    benchmark::DoNotOptimize(ufcal::solve_weights(problem, ufcal::VectorXd::Ones(problem.n_a())));
}
BENCHMARK(BM_SolveWeights)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
