#include "ufcal/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "ufcal/error.hpp"
#include "ufcal/variance.hpp"

namespace ufcal {

std::string_view setup_name(Setup setup) {
  return setup == Setup::Linear ? "linear" : "nonlinear";
}

std::optional<Setup> parse_setup(std::string_view name) {
  std::string key;
  for (char c : name) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "linear") return Setup::Linear;
  if (key == "nonlinear") return Setup::Nonlinear;
  return std::nullopt;
}

void validate(const PopulationSpec& spec) {
  const double n = static_cast<double>(spec.population_size);
  if (!(spec.expected_b > 0.0 && spec.expected_b < spec.expected_a && spec.expected_a < n)) {
    throw ConfigError("population spec must satisfy 0 < n_B0 < n_A0 < N");
  }
}

double truncated_normal(Engine& engine, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("truncated_normal: lo must be below hi");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double z = normal(engine);
    if (z >= lo && z <= hi) return z;
  }
}

double beta33(Engine& engine) {
  std::gamma_distribution<double> gamma(3.0, 1.0);
  for (;;) {
    const double a = gamma(engine);
    const double b = gamma(engine);
    const double v = a / (a + b);
    if (v > 0.0 && v < 1.0) return v;
  }
}

VectorXd scale_to_total(const VectorXd& scores, double total, std::string_view what) {
  const double s = scores.sum();
  if (!(s > 0.0)) throw NumericalError(std::string(what) + ": scores sum to zero");
  VectorXd out = scores * (total / s);
  const Index over = (out.array() >= 1.0).count();
  if (over > 0) {
    throw NumericalError(std::string(what) + ": proportional scaling pushes " +
                         std::to_string(over) + " probabilities to 1 or above");
  }
  return out;
}

FinitePopulation gen_population(const PopulationSpec& spec) {
  validate(spec);
  const Index n = spec.population_size;
  Engine engine = make_engine(spec.seed, 0x706f70ULL);
  FinitePopulation pop;
  pop.x.resize(n, 2);
  pop.y.resize(n);
  pop.m.resize(n);
  VectorXd z1(n), z2(n);

  if (spec.setup == Setup::Linear) {
    std::normal_distribution<double> eps(0.0, 1.0);
    for (Index i = 0; i < n; ++i) {
      z1[i] = 2.0 * (beta33(engine) - 0.5);
      z2[i] = 2.0 * (beta33(engine) - 0.5);
      pop.x(i, 0) = z1[i];
      pop.x(i, 1) = 0.3 * pop.x(i, 0) + z2[i];
      pop.m[i] = 10.0 + 2.0 * pop.x(i, 0) + 2.0 * pop.x(i, 1);
      pop.y[i] = pop.m[i] + eps(engine);
    }
    const double m_min = pop.m.minCoeff();
    pop.pi_a = scale_to_total((pop.m.array() - m_min + 0.25).matrix(), spec.expected_a, "pi_A");
  } else {
    std::normal_distribution<double> eps(0.0, 0.5);
    for (Index i = 0; i < n; ++i) {
      z1[i] = truncated_normal(engine);
      z2[i] = truncated_normal(engine);
      pop.x(i, 0) = std::abs(z1[i]) * std::exp(-z1[i]);
      pop.x(i, 1) = std::abs(z2[i]) * std::exp(z2[i]);
      pop.m[i] = 3.0 + 2.0 * z1[i] + z2[i];
      pop.y[i] = pop.m[i] + eps(engine);
    }
    // pi_A = expit(1 - 0.8 z1 - 0.8 z2) / c_A with c_A = sum expit(.) / n_A0.
    VectorXd score(n);
    for (Index i = 0; i < n; ++i) score[i] = expit(1.0 - 0.8 * z1[i] - 0.8 * z2[i]);
    pop.pi_a = scale_to_total(score, spec.expected_a, "pi_A");
  }
  const double m_min = pop.m.minCoeff();
  pop.pi_b = scale_to_total((pop.m.array() - m_min + 2.0).log().matrix(), spec.expected_b, "pi_B");
  pop.ybar = pop.y.mean();
  return pop;
}

TwoSampleData draw_samples(const FinitePopulation& pop, std::uint64_t seed) {
  const Index n = pop.y.size();
  for (int attempt = 0; attempt < 10; ++attempt) {
    Engine engine = make_engine(seed, 0x64726177ULL, static_cast<std::uint64_t>(attempt));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Index> in_a, in_b;
    for (Index i = 0; i < n; ++i) {
      if (unif(engine) < pop.pi_a[i]) in_a.push_back(i);
      if (unif(engine) < pop.pi_b[i]) in_b.push_back(i);
    }
    if (in_a.size() < 2 || in_b.size() < 2) continue;
    TwoSampleData data;
    data.x_a.resize(static_cast<Index>(in_a.size()), pop.x.cols());
    data.y_a.resize(static_cast<Index>(in_a.size()));
    for (std::size_t k = 0; k < in_a.size(); ++k) {
      data.x_a.row(static_cast<Index>(k)) = pop.x.row(in_a[k]);
      data.y_a[static_cast<Index>(k)] = pop.y[in_a[k]];
    }
    data.x_b.resize(static_cast<Index>(in_b.size()), pop.x.cols());
    data.d_b.resize(static_cast<Index>(in_b.size()));
    for (std::size_t k = 0; k < in_b.size(); ++k) {
      data.x_b.row(static_cast<Index>(k)) = pop.x.row(in_b[k]);
      data.d_b[static_cast<Index>(k)] = 1.0 / pop.pi_b[in_b[k]];
    }
    data.population_size = static_cast<double>(n);
    data.population_size_known = true;
    return data;
  }
  throw NumericalError("draw_samples: empty sample after 10 attempts");
}

LambdaSetting simulation_lambdas(const PopulationSpec& spec) {
  return LambdaSetting::fixed(1.0 / spec.expected_b, 1e-4 / spec.expected_b);
}

namespace {

std::vector<ReplicateRecord> run_replicate(const PopulationSpec& spec,
                                           const MonteCarloOptions& options, int rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  PopulationSpec local = spec;
  local.seed = derive_seed(options.seed, r, 1);
  std::vector<ReplicateRecord> out;

  auto fail_all = [&](const std::string& why) {
    for (Method m : options.methods) {
      ReplicateRecord rec;
      rec.replicate = rep;
      rec.method = m;
      rec.ok = false;
      rec.error = why;
      out.push_back(rec);
    }
    return out;
  };

  FinitePopulation pop;
  TwoSampleData data;
  try {
    pop = gen_population(local);
    data = draw_samples(pop, derive_seed(options.seed, r, 2));
  } catch (const Error& e) {
    return fail_all(e.what());
  }

  EstimatorOptions est_opts = options.estimator;
  est_opts.seed = derive_seed(options.seed, r, 3);
  est_opts.ridge.seed = derive_seed(options.seed, r, 4);
  Estimation est(data, est_opts);

  for (Method m : options.methods) {
    ReplicateRecord rec;
    rec.replicate = rep;
    rec.method = m;
    rec.ybar = pop.ybar;
    rec.n_a = data.n_a();
    rec.n_b = data.n_b();
    try {
      const EstimateResult res = est.run(m);
      rec.estimate = res.estimate;
      rec.bias = res.estimate - pop.ybar;
      rec.variance = res.variance;
      rec.ci_low = res.ci_low;
      rec.ci_high = res.ci_high;
      if (res.ci_low && res.ci_high) {
        rec.covered = *res.ci_low <= pop.ybar && pop.ybar <= *res.ci_high;
      }
      rec.seconds = res.seconds;
      if (m == Method::HT_KL && options.bootstrap_reps > 0) {
        BootstrapOptions bo;
        bo.replicates = options.bootstrap_reps;
        bo.seed = derive_seed(options.seed, r, 5);
        rec.bootstrap_variance = bootstrap_variance(data, est.problem(Penalty::KL), bo).variance;
      }
    } catch (const Error& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    out.push_back(rec);
  }
  return out;
}

}  // namespace

std::vector<ReplicateRecord> monte_carlo(const PopulationSpec& spec,
                                         const MonteCarloOptions& options) {
  validate(spec);
  if (options.replicates < 1) throw ConfigError("monte_carlo: need at least one replicate");
  if (options.methods.empty()) throw ConfigError("monte_carlo: no methods selected");

  std::vector<std::vector<ReplicateRecord>> per_rep(static_cast<std::size_t>(options.replicates));
  int threads = options.threads > 0 ? options.threads
                                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, options.replicates);

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int rep = next++; rep < options.replicates; rep = next++) {
      per_rep[static_cast<std::size_t>(rep)] = run_replicate(spec, options, rep);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::vector<ReplicateRecord> records;
  for (auto& chunk : per_rep) {
    for (auto& rec : chunk) records.push_back(std::move(rec));
  }
  return records;
}

std::vector<MethodSummary> summarize(const std::vector<ReplicateRecord>& records) {
  std::vector<MethodSummary> out;
  for (Method m : all_methods()) {
    std::vector<double> bias, est, secs, boot;
    int runs = 0, failures = 0, covered = 0, with_ci = 0;
    for (const ReplicateRecord& r : records) {
      if (r.method != m) continue;
      ++runs;
      if (!r.ok) {
        ++failures;
        continue;
      }
      bias.push_back(r.bias);
      est.push_back(r.estimate);
      secs.push_back(r.seconds);
      if (r.covered) {
        ++with_ci;
        covered += *r.covered ? 1 : 0;
      }
      if (r.bootstrap_variance) boot.push_back(*r.bootstrap_variance);
    }
    if (runs == 0) continue;
    MethodSummary s;
    s.method = m;
    s.runs = runs;
    s.failures = failures;
    s.flagged = failures > 0.05 * runs;
    if (!bias.empty()) {
      const double k = static_cast<double>(bias.size());
      s.mean_bias = pairwise_sum(bias) / k;
      s.bias_se = bias.size() > 1 ? std::sqrt(sample_variance(bias) / k) : 0.0;
      double sq = 0.0;
      for (double b : bias) sq += b * b;
      s.rmse = std::sqrt(sq / k);
      s.mean_seconds = pairwise_sum(secs) / k;
    }
    if (with_ci > 0) s.coverage = static_cast<double>(covered) / with_ci;
    if (boot.size() > 1 && est.size() > 1) {
      const double mc_var = sample_variance(est);
      s.bootstrap_relative_bias = (pairwise_sum(boot) / static_cast<double>(boot.size()) - mc_var) / mc_var;
    }
    out.push_back(s);
  }
  return out;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::string records_csv_header(bool with_timing) {
  return std::string("replicate,method,ok,estimate,ybar,bias,variance,ci_low,ci_high,covered,"
                     "bootstrap_variance,") +
         (with_timing ? "seconds," : "") + "n_a,n_b,error";
}

std::string record_csv_line(const ReplicateRecord& r, bool with_timing) {
  std::string error = r.error;
  std::replace(error.begin(), error.end(), ',', ';');
  std::replace(error.begin(), error.end(), '\n', ' ');
  std::ostringstream os;
  os << r.replicate << ',' << method_name(r.method) << ',' << (r.ok ? 1 : 0) << ','
     << (r.ok ? fmt(r.estimate) : "") << ',' << fmt(r.ybar) << ',' << (r.ok ? fmt(r.bias) : "")
     << ',' << fmt(r.variance) << ',' << fmt(r.ci_low) << ',' << fmt(r.ci_high) << ','
     << (r.covered ? (*r.covered ? "1" : "0") : "") << ',' << fmt(r.bootstrap_variance) << ',';
  if (with_timing) os << fmt(r.seconds) << ',';
  os << r.n_a << ',' << r.n_b << ',' << error;
  return os.str();
}

}  // namespace ufcal
