#pragma once

// Convergence studies over (method, theta, N) cells and their result tables.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddiff/eval.hpp"
#include "ddiff/solvers.hpp"

namespace ddiff {

enum class ModelKind { toy_uniform, masked_toy };
enum class OutputFormat { csv, json };

std::string_view to_string(ModelKind m);
std::string_view to_string(OutputFormat f);
OutputFormat parse_format(std::string_view name);

struct ExperimentConfig {
  ModelKind model = ModelKind::toy_uniform;
  std::vector<Method> methods;
  std::vector<double> thetas;
  std::vector<int> steps;
  std::int64_t samples = 1'000'000;
  std::uint64_t seed = 1;
  double horizon = 12.0;
  double delta = 0.0;
  std::optional<std::filesystem::path> target_file;
  std::optional<std::filesystem::path> out;
  OutputFormat format = OutputFormat::csv;
  int workers = 1;
  int bootstrap = kDefaultBootstrap;
  double ci_level = kDefaultCiLevel;
  std::optional<double> min_fit_steps;

  // Target generation when no file is given.
  std::uint64_t target_seed = 7;
  int sites = 15;  ///< toy state count S
  int dims = 3;    ///< masked sequence length d
  int vocab = 4;   ///< masked vocabulary size S

  /// Throws ErrorKind::config on violated invariants.
  void validate() const;
};

ExperimentConfig toy_converge_defaults();
ExperimentConfig masked_converge_defaults();
ExperimentConfig exact_check_defaults();

/// Applies one `key = value` setting; keys match the long CLI flag names
/// without dashes (method, theta, steps, samples, ...). Lists are comma
/// separated. Throws ErrorKind::config on unknown keys or bad values.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Reads a flat `key = value` file ('#' starts a comment).
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Default worker count: $DDIFF_WORKERS if set, else the hardware thread count.
int default_workers();

struct ResultRow {
  std::string method;
  std::optional<double> theta;  ///< empty for methods without a theta parameter
  int steps = 0;
  double nfe = 0.0;  ///< mean oracle evaluations per trajectory
  double kl = 0.0;   ///< +inf when a state with target mass was never sampled
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double positivity_frac = 1.0;
  double rejection_frac = 0.0;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const ResultRow&) const = default;
};

struct MethodFit {
  std::string method;
  std::optional<double> theta;
  ConvergenceFit fit;
  std::vector<int> window;  ///< steps values that entered the fit
};

struct NfeSummary {
  double mean = 0.0;
  double stddev = 0.0;
  double p95 = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<MethodFit> fits;
  double noise_floor = 0.0;
  std::int64_t support = 0;
  std::vector<NfeSummary> nfe;  ///< parallel to rows
  std::vector<std::string> warnings;
};

/// Fits log KL against log N over rows of one (method, theta) whose KL is
/// finite and above `floor_factor` times the noise floor, with N >= min_steps.
/// Returns nullopt when fewer than two points qualify.
std::optional<MethodFit> fit_rows(const std::vector<ResultRow>& rows, const std::string& method,
                                  std::optional<double> theta, double noise_floor,
                                  std::optional<double> min_steps, double floor_factor = 10.0);

inline constexpr double kFitFloorFactor = 10.0;

ExperimentResult cmd_toy_converge(const ExperimentConfig& config);
ExperimentResult cmd_masked_converge(const ExperimentConfig& config);
ExperimentResult cmd_exact_check(const ExperimentConfig& config);

/// CSV header: method,theta,steps,nfe,kl,ci_lo,ci_hi,positivity_frac,rejection_frac,wall_ms,seed
/// Numbers use 17 significant digits.
std::string format_results(const std::vector<ResultRow>& rows, OutputFormat format);
std::vector<ResultRow> parse_results(const std::string& text, OutputFormat format);

/// Writes format_results(rows, format) to path; ErrorKind::io on failure.
void emit_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path,
                  OutputFormat format);

/// Human-readable summary (rows, fits, noise floor) for the terminal.
std::string summarize(const ExperimentResult& result);

}  // namespace ddiff
