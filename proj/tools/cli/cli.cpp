#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <map>
#include <sstream>

#include "ufcal/error.hpp"
#include "ufcal/variance.hpp"

namespace ufcal::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;  // file line of each row
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  Table table;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (!have_header) {
      if (line_no == 1 && cells[0].rfind("\xEF\xBB\xBF", 0) == 0) cells[0].erase(0, 3);
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(table.header.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string& c = cells[j];
      const char* begin = c.data();
      const char* end = c.data() + c.size();
      if (!c.empty() && *begin == '+') ++begin;
      auto [ptr, ec] = std::from_chars(begin, end, row[j]);
      if (c.empty() || ec != std::errc() || ptr != end || !std::isfinite(row[j])) {
        throw ParseError(path.string() + ": line " + std::to_string(line_no) + ", column '" +
                         table.header[j] + "': not a finite number: '" + c + "'");
      }
    }
    table.rows.push_back(std::move(row));
    table.lines.push_back(line_no);
  }
  if (!have_header) throw ParseError(path.string() + ": empty file");
  return table;
}

std::ptrdiff_t column(const Table& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  return it == t.header.end() ? -1 : it - t.header.begin();
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

// 1/d rounded so that 1/(1/d) gives back d when such a double exists.
double invertible_reciprocal(double d) {
  const double p = 1.0 / d;
  if (1.0 / p == d) return p;
  double lo = p, hi = p;
  for (int k = 0; k < 4; ++k) {
    lo = std::nextafter(lo, 0.0);
    hi = std::nextafter(hi, 2.0);
    if (1.0 / lo == d) return lo;
    if (1.0 / hi == d) return hi;
  }
  return p;
}

std::ostream& output_stream(const RunConfig& config, std::ostream& fallback,
                            std::ofstream& file) {
  if (!config.out) return fallback;
  file.open(*config.out);
  if (!file) throw InputError("cannot write " + config.out->string());
  return file;
}

json result_json(const EstimateResult& r) {
  json j;
  j["method"] = std::string(method_name(r.method));
  j["estimate"] = r.estimate;
  if (r.variance) j["variance"] = *r.variance;
  if (r.ci_low && r.ci_high) j["ci"] = {*r.ci_low, *r.ci_high};
  j["seconds"] = r.seconds;
  if (!r.diagnostics.empty()) {
    json d = json::object();
    for (const auto& [k, v] : r.diagnostics) d[k] = v;
    j["diagnostics"] = d;
  }
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

EstimatorOptions estimator_options(const RunConfig& config) {
  EstimatorOptions options;
  options.lambdas = config.lambda_auto ? LambdaSetting::cross_validated()
                                       : LambdaSetting::fixed(config.lambda1, config.lambda2);
  options.bounds = config.bounds;
  options.kl_sign = config.kl_sign;
  options.l2_cap = config.l2_cap;
  options.seed = config.seed;
  options.ridge.seed = derive_seed(config.seed, 4);
  return options;
}

std::vector<Method> methods_or(const RunConfig& config, std::vector<Method> fallback) {
  return config.methods.empty() ? std::move(fallback) : config.methods;
}

void log_warnings(const EstimateResult& r, std::ostream& log) {
  for (const auto& w : r.warnings) log << "warning: " << method_name(r.method) << ": " << w << '\n';
}

void attach_bootstrap(Estimation& est, EstimateResult& r, const RunConfig& config,
                      std::ostream& log) {
  if (config.bootstrap_reps <= 0) return;
  if (r.method != Method::HT_KL && r.method != Method::Prop) return;
  est.weights(Penalty::KL);
  BootstrapOptions bo;
  bo.replicates = config.bootstrap_reps;
  bo.seed = derive_seed(config.seed, 5);
  bo.target = r.method == Method::Prop ? BootstrapTarget::Prop : BootstrapTarget::HtKl;
  const auto t0 = std::chrono::steady_clock::now();
  const VarianceResult v =
      r.method == Method::Prop
          ? bootstrap_variance(est.data(), est.problem(Penalty::KL), bo, &est.m_hat_a(),
                               &est.m_hat_b())
          : bootstrap_variance(est.data(), est.problem(Penalty::KL), bo);
  r.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.diagnostics["bootstrap_variance"] = v.variance;
  r.diagnostics["bootstrap_dropped"] = v.dropped;
  r.diagnostics["bootstrap_negative_draws"] = v.negative_draws;
  if (v.dropped > 0) log << "bootstrap: dropped " << v.dropped << " replicates\n";
  if (!r.variance) {
    r.variance = v.variance;
    const Interval ci = confidence_interval(r.estimate, v.variance);
    r.ci_low = ci.low;
    r.ci_high = ci.high;
  }
}

int run_estimate(const RunConfig& config, std::ostream& out, std::ostream& log) {
  TwoSampleData data = load_two_sample(config.sample_a, config.sample_b, config.population_size);
  if (!data.population_size_known)
    log << "N not given; using sum of design weights " << data.population_size << '\n';
  Estimation est(std::move(data), estimator_options(config));
  json results = json::array();
  for (Method m : methods_or(config, {Method::Prop})) {
    EstimateResult r = est.run(m);
    attach_bootstrap(est, r, config, log);
    log_warnings(r, log);
    results.push_back(result_json(r));
  }
  std::ofstream file;
  output_stream(config, out, file) << results.dump(2) << '\n';
  return kExitOk;
}

int run_cv(const RunConfig& config, std::ostream& out, std::ostream& log) {
  const TwoSampleData data =
      load_two_sample(config.sample_a, config.sample_b, config.population_size);
  const CalibrationSetup setup = prepare_calibration(data);
  CalibrationProblem base = make_problem(setup, data, 0.0, 0.0, Penalty::KL);
  base.bounds = config.bounds;
  base.kl_sign = config.kl_sign;
  CrossValidationOptions options;
  options.seed = config.seed;
  const auto grid = default_lambda_grid(data.n_b());
  const auto t0 = std::chrono::steady_clock::now();
  const CrossValidationResult cv = cross_validate(setup, base, grid, grid, options);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log << "cv: lambda1 = " << cv.lambda1 << ", lambda2 = " << cv.lambda2 << '\n';

  json criterion = json::array();
  for (Index i = 0; i < cv.criterion.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < cv.criterion.cols(); ++j) row.push_back(cv.criterion(i, j));
    criterion.push_back(row);
  }
  json j;
  j["lambda1"] = cv.lambda1;
  j["lambda2"] = cv.lambda2;
  j["grid1"] = cv.grid1;
  j["grid2"] = cv.grid2;
  j["criterion"] = criterion;
  j["seconds"] = seconds;
  std::ofstream file;
  output_stream(config, out, file) << j.dump(2) << '\n';
  return kExitOk;
}

PopulationSpec population_spec(const RunConfig& config) {
  PopulationSpec spec;
  spec.setup = config.setup;
  spec.population_size = config.n_pop;
  spec.expected_a = config.n_a;
  spec.expected_b = config.n_b;
  spec.seed = config.seed;
  validate(spec);
  return spec;
}

int run_simulate(const RunConfig& config, std::ostream& out, std::ostream& log) {
  const PopulationSpec spec = population_spec(config);
  MonteCarloOptions options;
  options.methods = methods_or(config, all_methods());
  options.replicates = config.reps;
  options.seed = config.seed;
  options.estimator = estimator_options(config);
  if (config.lambda_auto) options.estimator.lambdas = simulation_lambdas(spec);
  options.bootstrap_reps = config.bootstrap_reps;
  options.threads = config.threads;

  const auto records = monte_carlo(spec, options);
  std::ofstream file;
  std::ostream& os = output_stream(config, out, file);
  os << records_csv_header(config.timing) << '\n';
  for (const auto& r : records) os << record_csv_line(r, config.timing) << '\n';

  const auto summaries = summarize(records);
  std::ofstream summary_file;
  if (config.summary) {
    summary_file.open(*config.summary);
    if (!summary_file) throw InputError("cannot write " + config.summary->string());
    summary_file << "method,runs,failures,mean_bias,bias_se,rmse,coverage,bootstrap_relative_bias\n";
  }
  for (const auto& s : summaries) {
    log << method_name(s.method) << ": bias " << s.mean_bias << " (se " << s.bias_se
        << "), rmse " << s.rmse;
    if (s.coverage) log << ", coverage " << *s.coverage;
    if (s.failures > 0) log << ", failures " << s.failures << (s.flagged ? " [flagged]" : "");
    log << '\n';
    if (summary_file.is_open()) {
      summary_file << method_name(s.method) << ',' << s.runs << ',' << s.failures << ','
                   << format_double(s.mean_bias) << ',' << format_double(s.bias_se) << ','
                   << format_double(s.rmse) << ','
                   << (s.coverage ? format_double(*s.coverage) : "") << ','
                   << (s.bootstrap_relative_bias ? format_double(*s.bootstrap_relative_bias) : "")
                   << '\n';
    }
  }
  for (const auto& r : records)
    if (!r.ok) log << "replicate " << r.replicate << " " << method_name(r.method) << ": " << r.error << '\n';
  return kExitOk;
}

// Best of five runs; single solves take milliseconds and are noisy.
double time_solve(const CalibrationProblem& problem, WeightSolution& solution) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 5; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    solution = solve_weights(problem, VectorXd::Ones(problem.n_a()));
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

int run_bench(const RunConfig& config, std::ostream& out, std::ostream& log) {
  const PopulationSpec spec = population_spec(config);
  const FinitePopulation pop = gen_population(spec);
  TwoSampleData data = draw_samples(pop, derive_seed(config.seed, 0, 2));
  log << "bench: n_A = " << data.n_a() << ", n_B = " << data.n_b() << '\n';

  EstimatorOptions options = estimator_options(config);
  if (config.lambda_auto) options.lambdas = simulation_lambdas(spec);
  Estimation est(data, options);

  json results = json::array();
  for (Method m : methods_or(config, all_methods())) {
    EstimateResult r = est.run(m);
    log_warnings(r, log);
    log << method_name(m) << ": " << r.seconds << " s\n";
    results.push_back(result_json(r));
  }

  // Weight solves alone, both from r = 1 on the shared spectrum.
  WeightSolution kl, l2;
  const double t_kl = time_solve(est.problem(Penalty::KL), kl);
  const double t_l2 = time_solve(est.problem(Penalty::L2), l2);
  log << "solve KL " << t_kl << " s (" << kl.iterations << " it), L2 " << t_l2 << " s ("
      << l2.iterations << " it)\n";

  json j;
  j["setup"] = std::string(setup_name(spec.setup));
  j["n_pop"] = spec.population_size;
  j["n_a"] = data.n_a();
  j["n_b"] = data.n_b();
  j["results"] = results;
  j["solve_seconds"] = {{"KL", t_kl}, {"L2", t_l2}};
  j["solve_iterations"] = {{"KL", kl.iterations}, {"L2", l2.iterations}};
  j["kl_to_l2_ratio"] = t_l2 > 0 ? t_kl / t_l2 : 0.0;
  std::ofstream file;
  output_stream(config, out, file) << j.dump(2) << '\n';
  return kExitOk;
}

void require_file(const fs::path& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(flag) + ": no such file " + path.string());
}

void check(const RunConfig& c) {
  if (c.command == Command::Estimate || c.command == Command::CrossValidate) {
    require_file(c.sample_a, "--sample-a");
    require_file(c.sample_b, "--sample-b");
  }
  if (c.population_size && !(*c.population_size > 0)) throw ConfigError("--pop-size must be positive");
  if (!(c.bounds.lower > 0) || !(c.bounds.upper > c.bounds.lower))
    throw ConfigError("need 0 < --xi1 < --xi2");
  if (!c.lambda_auto && !(c.lambda1 > 0 && c.lambda2 >= 0))
    throw ConfigError("need --lambda1 > 0 and --lambda2 >= 0");
  if (c.bootstrap_reps < 0) throw ConfigError("--bootstrap must be >= 0");
  if (c.reps < 1) throw ConfigError("--reps must be >= 1");
  if (c.threads < 0) throw ConfigError("--threads must be >= 0");
  if (!(c.l2_cap > 0)) throw ConfigError("--c-n must be positive");
}

}  // namespace

TwoSampleData load_two_sample(const fs::path& path_a, const fs::path& path_b,
                              std::optional<double> population_size) {
  const Table a = read_csv(path_a);
  const Table b = read_csv(path_b);
  const auto y_col = column(a, "y");
  if (y_col < 0) throw ParseError(path_a.string() + ": missing column 'y'");
  const auto pi_col = column(b, "pi_b");
  if (pi_col < 0) throw ParseError(path_b.string() + ": missing column 'pi_b'");

  std::vector<std::size_t> a_cols, b_cols;
  for (std::size_t j = 0; j < a.header.size(); ++j) {
    if (static_cast<std::ptrdiff_t>(j) == y_col) continue;
    const auto k = column(b, a.header[j]);
    if (k < 0) throw ParseError(path_b.string() + ": missing column '" + a.header[j] + "'");
    a_cols.push_back(j);
    b_cols.push_back(static_cast<std::size_t>(k));
  }
  if (b.header.size() != a_cols.size() + 1) {
    for (const auto& name : b.header) {
      if (name != "pi_b" && column(a, name) < 0)
        throw ParseError(path_a.string() + ": missing column '" + name + "'");
    }
    throw ParseError(path_b.string() + ": duplicate column names");
  }
  if (a_cols.empty()) throw ParseError(path_a.string() + ": no covariate columns");

  const Index na = static_cast<Index>(a.rows.size());
  const Index nb = static_cast<Index>(b.rows.size());
  const Index dim = static_cast<Index>(a_cols.size());
  MatrixXd xa(na, dim), xb(nb, dim);
  VectorXd ya(na), db(nb);
  for (Index i = 0; i < na; ++i) {
    for (Index j = 0; j < dim; ++j) xa(i, j) = a.rows[i][a_cols[j]];
    ya(i) = a.rows[i][y_col];
  }
  for (Index i = 0; i < nb; ++i) {
    for (Index j = 0; j < dim; ++j) xb(i, j) = b.rows[i][b_cols[j]];
    const double pi = b.rows[i][pi_col];
    if (!(pi > 0.0 && pi <= 1.0)) {
      throw ParseError(path_b.string() + ": line " + std::to_string(b.lines[i]) +
                       ", column 'pi_b': inclusion probability " + format_double(pi) +
                       " outside (0, 1]");
    }
    db(i) = 1.0 / pi;
  }
  return make_two_sample(std::move(xa), std::move(ya), std::move(xb), std::move(db),
                         population_size);
}

void save_two_sample(const TwoSampleData& data, const fs::path& path_a, const fs::path& path_b,
                     const std::vector<std::string>& covariate_names) {
  std::vector<std::string> names = covariate_names;
  if (names.empty())
    for (Index j = 0; j < data.dim(); ++j) names.push_back("x" + std::to_string(j + 1));
  if (static_cast<Index>(names.size()) != data.dim())
    throw ShapeError("save_two_sample: need one name per covariate");

  const auto write = [&](const fs::path& path, const MatrixXd& x, const VectorXd& last,
                         const char* last_name, bool reciprocal) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write " + path.string());
    for (const auto& n : names) os << n << ',';
    os << last_name << '\n';
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x.cols(); ++j) os << format_double(x(i, j)) << ',';
      os << format_double(reciprocal ? invertible_reciprocal(last(i)) : last(i)) << '\n';
    }
  };
  write(path_a, data.x_a, data.y_a, "y", false);
  write(path_b, data.x_b, data.d_b, "pi_b", true);
}

std::optional<RunConfig> parse_args(int argc, const char* const* argv, int& exit_code) {
  RunConfig config;
  CLI::App app{"Uniform functional calibration of non-probability samples", "ufcal"};
  app.require_subcommand(1);

  auto* estimate = app.add_subcommand("estimate", "Estimate the population mean of y");
  auto* cv = app.add_subcommand("cv", "Cross-validate the regularization parameters");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo replicates, CSV per replicate");
  auto* bench = app.add_subcommand("bench", "Wall times per method on one simulated draw");

  std::vector<std::string> method_names;
  std::string lambda1 = "auto", lambda2 = "auto", kl_sign = "as-written", setup = "linear";

  for (auto* sub : {estimate, cv}) {
    sub->add_option("--sample-a", config.sample_a, "CSV of sample A (x..., y)")->required();
    sub->add_option("--sample-b", config.sample_b, "CSV of sample B (x..., pi_b)")->required();
    sub->add_option("--pop-size", config.population_size, "Population size N (default: sum 1/pi_b)");
  }
  for (auto* sub : {estimate, simulate, bench}) {
    sub->add_option("--method", method_names, "Estimator (repeatable)");
    sub->add_option("--lambda1", lambda1, "lambda1 or 'auto'");
    sub->add_option("--lambda2", lambda2, "lambda2 or 'auto'");
    sub->add_option("--c-n", config.l2_cap, "Upper cap C_N on the BSS ratios");
  }
  for (auto* sub : {estimate, cv, simulate, bench}) {
    sub->add_option("--xi1", config.bounds.lower, "Lower bound on the density ratios");
    sub->add_option("--xi2", config.bounds.upper, "Upper bound on the density ratios");
    sub->add_option("--kl-sign", kl_sign, "as-written | reversed");
    sub->add_option("--seed", config.seed, "Random seed");
    sub->add_option("--out", config.out, "Output file (default: stdout)");
  }
  for (auto* sub : {estimate, simulate})
    sub->add_option("--bootstrap", config.bootstrap_reps, "Bootstrap replicates (0: off)");
  for (auto* sub : {simulate, bench}) {
    sub->add_option("--setup", setup, "linear | nonlinear");
    sub->add_option("--n-pop", config.n_pop, "Population size");
    sub->add_option("--n-a", config.n_a, "Expected size of A");
    sub->add_option("--n-b", config.n_b, "Expected size of B");
  }
  simulate->add_option("--reps", config.reps, "Monte Carlo replicates");
  simulate->add_option("--threads", config.threads, "Worker threads (0: all cores)");
  simulate->add_flag("--timing", config.timing, "Add a wall-time column");
  simulate->add_option("--summary", config.summary, "Write a per-method summary CSV");

  try {
    app.parse(argc, argv);
    if (estimate->parsed()) config.command = Command::Estimate;
    if (cv->parsed()) config.command = Command::CrossValidate;
    if (simulate->parsed()) config.command = Command::Simulate;
    if (bench->parsed()) config.command = Command::Bench;

    for (const auto& name : method_names) {
      const auto m = parse_method(name);
      if (!m) throw CLI::ValidationError("--method", "unknown method '" + name + "'");
      config.methods.push_back(*m);
    }
    const bool auto1 = lambda1 == "auto", auto2 = lambda2 == "auto";
    if (auto1 != auto2)
      throw CLI::ValidationError("--lambda1/--lambda2", "give both values or neither");
    config.lambda_auto = auto1;
    if (!auto1) {
      try {
        config.lambda1 = std::stod(lambda1);
        config.lambda2 = std::stod(lambda2);
      } catch (const std::exception&) {
        throw CLI::ValidationError("--lambda1/--lambda2", "not a number");
      }
    }
    if (kl_sign == "as-written") config.kl_sign = KlSign::AsWritten;
    else if (kl_sign == "reversed") config.kl_sign = KlSign::Reversed;
    else throw CLI::ValidationError("--kl-sign", "expected as-written or reversed");
    const auto s = parse_setup(setup);
    if (!s) throw CLI::ValidationError("--setup", "expected linear or nonlinear");
    config.setup = *s;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    exit_code = code == 0 ? kExitOk : kExitInput;
    return std::nullopt;
  }
  exit_code = kExitOk;
  return config;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& log) {
  try {
    check(config);
    switch (config.command) {
      case Command::Estimate: return run_estimate(config, out, log);
      case Command::CrossValidate: return run_cv(config, out, log);
      case Command::Simulate: return run_simulate(config, out, log);
      case Command::Bench: return run_bench(config, out, log);
    }
  } catch (const InputError& e) {
    log << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitInput;
}

}  // namespace ufcal::cli
