#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ufcal/calibrate.hpp"
#include "ufcal/data.hpp"
#include "ufcal/estimators.hpp"
#include "ufcal/simulate.hpp"

namespace ufcal::cli {

enum class Command { Estimate, Simulate, CrossValidate, Bench };

struct RunConfig {
  Command command = Command::Estimate;

  // estimate / cv inputs
  std::filesystem::path sample_a;
  std::filesystem::path sample_b;
  std::optional<double> population_size;

  std::vector<Method> methods;
  bool lambda_auto = true;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Bounds bounds;
  KlSign kl_sign = KlSign::AsWritten;
  double l2_cap = 1e8;
  int bootstrap_reps = 0;

  // simulate / bench
  Setup setup = Setup::Linear;
  Index n_pop = 5000;
  double n_a = 1000;
  double n_b = 100;
  int reps = 1;
  int threads = 0;
  bool timing = false;
  std::optional<std::filesystem::path> summary;

  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;
};

/// Exit codes of `run`.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

/// Reads sample A (columns x..., y) and sample B (columns x..., pi_b) from
/// headed CSV files. Covariate columns are matched by name. Without
/// `population_size`, N is the sum of 1/pi_b. Throws ParseError naming the
/// file, row and column of the first bad cell.
TwoSampleData load_two_sample(const std::filesystem::path& path_a,
                              const std::filesystem::path& path_b,
                              std::optional<double> population_size = std::nullopt);

/// Writes the two CSV files read by load_two_sample. Inclusion
/// probabilities are written so that reading them back reproduces d_B
/// exactly.
void save_two_sample(const TwoSampleData& data, const std::filesystem::path& path_a,
                     const std::filesystem::path& path_b,
                     const std::vector<std::string>& covariate_names = {});

/// Parses argv into a RunConfig. Returns nullopt after printing help or a
/// usage error; `exit_code` receives the code to exit with.
std::optional<RunConfig> parse_args(int argc, const char* const* argv, int& exit_code);

/// Executes the command. Results go to `config.out` or `out`; diagnostics to
/// `log`.
int run(const RunConfig& config, std::ostream& out, std::ostream& log);

}  // namespace ufcal::cli
