// ddiff: convergence studies for discrete diffusion samplers.
//
//   ddiff toy-converge    [flags]   15-state toy, KL vs N for each method
//   ddiff masked-converge [flags]   masked model on an enumerable joint table
//   ddiff exact-check     [flags]   uniformization exactness and NFE spread
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error,
// 4 numerical or model error.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddiff/error.hpp"
#include "ddiff/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

int exit_code(ddiff::ErrorKind kind) {
  switch (kind) {
    case ddiff::ErrorKind::config:
    case ddiff::ErrorKind::data:
    case ddiff::ErrorKind::domain:
      return kExitConfig;
    case ddiff::ErrorKind::io:
      return kExitIo;
    case ddiff::ErrorKind::singular:
    case ddiff::ErrorKind::numerical:
      return kExitNumerical;
  }
  return kExitNumerical;
}

struct FlagSpec {
  const char* name;
  const char* help;
};

// Every flag maps onto the config key of the same name.
constexpr FlagSpec kFlags[] = {
    {"method", "comma list: euler, tau-leaping, uniformization, theta-rk2, theta-trapezoidal"},
    {"theta", "comma list of theta values in (0, 1]"},
    {"steps", "comma list of step counts N, strictly increasing"},
    {"samples", "trajectories per cell (M)"},
    {"seed", "sampler seed"},
    {"horizon", "reverse-time horizon T (toy model)"},
    {"delta", "early stopping time"},
    {"target-file", "target distribution table (dims/vocab header, '<index> <prob>' rows)"},
    {"out", "write the result table here"},
    {"format", "csv or json"},
    {"workers", "worker threads (default: $DDIFF_WORKERS or the hardware thread count)"},
    {"bootstrap", "bootstrap resamples for the KL interval"},
    {"ci-level", "bootstrap interval level"},
    {"min-fit-steps", "exclude N below this from the order fit"},
    {"p0-seed", "seed of the random target distribution"},
    {"sites", "toy state count S"},
    {"dims", "masked sequence length d"},
    {"vocab", "masked vocabulary size S"},
};

struct Subcommand {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::string config_file;
  bool quiet = false;
};

void add_flags(Subcommand& sub) {
  for (const auto& f : kFlags) sub.app->add_option(std::string("--") + f.name, sub.values[f.name], f.help);
  sub.app->add_option("--config", sub.config_file, "flat 'key = value' file; flags override it");
  sub.app->add_flag("-q,--quiet", sub.quiet, "suppress the summary");
}

ddiff::ExperimentConfig build_config(const Subcommand& sub, ddiff::ExperimentConfig config) {
  if (!sub.config_file.empty())
    for (const auto& [k, v] : ddiff::read_config_file(sub.config_file))
      ddiff::apply_setting(config, k, v);
  for (const auto& f : kFlags) {
    const std::string key = f.name;
    if (sub.app->count("--" + key) > 0) ddiff::apply_setting(config, key, sub.values.at(key));
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete diffusion sampler convergence studies"};
  app.require_subcommand(1);

  Subcommand toy, masked, exact;
  toy.app = app.add_subcommand("toy-converge", "KL vs step count on the 15-state toy model");
  masked.app = app.add_subcommand("masked-converge", "KL vs step count on the masked toy model");
  exact.app = app.add_subcommand("exact-check", "uniformization exactness and NFE distribution");
  for (Subcommand* s : {&toy, &masked, &exact}) add_flags(*s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    ddiff::ExperimentResult result;
    const Subcommand* sub = nullptr;
    ddiff::ExperimentConfig config;
    if (toy.app->parsed()) {
      sub = &toy;
      config = build_config(toy, ddiff::toy_converge_defaults());
      config.validate();
      result = ddiff::cmd_toy_converge(config);
    } else if (masked.app->parsed()) {
      sub = &masked;
      config = build_config(masked, ddiff::masked_converge_defaults());
      config.validate();
      result = ddiff::cmd_masked_converge(config);
    } else {
      sub = &exact;
      config = build_config(exact, ddiff::exact_check_defaults());
      config.validate();
      result = ddiff::cmd_exact_check(config);
    }

    // Table to --out or stdout; the summary goes wherever the table is not.
    if (config.out) {
      ddiff::emit_results(result.rows, *config.out, config.format);
      if (!sub->quiet) std::cout << ddiff::summarize(result);
    } else {
      std::cout << ddiff::format_results(result.rows, config.format);
      if (!sub->quiet) std::cerr << ddiff::summarize(result);
    }
    return 0;
  } catch (const ddiff::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
