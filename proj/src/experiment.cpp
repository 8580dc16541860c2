#include "ddiff/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>

#include "ddiff/error.hpp"
#include "ddiff/grid.hpp"
#include "ddiff/masked.hpp"
#include "ddiff/toy_model.hpp"

namespace ddiff {

std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::toy_uniform: return "toy-uniform";
    case ModelKind::masked_toy: return "masked-toy";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  require(!methods.empty(), ErrorKind::config, "config: method list is empty");
  require(!steps.empty(), ErrorKind::config, "config: steps list is empty");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    require(steps[i] >= 1, ErrorKind::config, "config: steps must be >= 1");
    if (i > 0)
      require(steps[i] > steps[i - 1], ErrorKind::config, "config: steps must be strictly increasing");
  }
  require(samples >= 1, ErrorKind::config, "config: samples must be >= 1");
  const bool any_theta =
      std::any_of(methods.begin(), methods.end(), [](Method m) { return uses_theta(m); });
  if (any_theta) require(!thetas.empty(), ErrorKind::config, "config: theta list is empty");
  for (double t : thetas) {
    require(t > 0.0 && t <= 1.0, ErrorKind::config, "config: theta values must lie in (0, 1]");
    if (t == 1.0 && std::find(methods.begin(), methods.end(), Method::theta_trapezoidal) !=
                        methods.end())
      fail(ErrorKind::config, "config: theta-trapezoidal requires theta < 1");
  }
  require(workers >= 1, ErrorKind::config, "config: workers must be >= 1");
  require(bootstrap >= 2, ErrorKind::config, "config: bootstrap must be >= 2");
  require(ci_level > 0.0 && ci_level < 1.0, ErrorKind::config, "config: ci-level must lie in (0, 1)");
  if (model == ModelKind::toy_uniform) {
    require(horizon > 0.0 && std::isfinite(horizon), ErrorKind::config,
            "config: horizon must be positive");
    require(delta >= 0.0 && delta < horizon, ErrorKind::config,
            "config: delta must lie in [0, horizon)");
    require(sites >= 2, ErrorKind::config, "config: sites must be >= 2");
  } else {
    require(delta > 0.0 && delta < 1.0, ErrorKind::config,
            "config: masked model needs an early stop delta in (0, 1)");
    require(dims >= 1 && dims <= kMaxDims, ErrorKind::config, "config: invalid dims");
    require(vocab >= 2, ErrorKind::config, "config: vocab must be >= 2");
  }
}

ExperimentConfig toy_converge_defaults() {
  ExperimentConfig c;
  c.model = ModelKind::toy_uniform;
  c.methods = {Method::tau_leaping, Method::theta_rk2, Method::theta_trapezoidal};
  c.thetas = {0.5};
  c.steps = {4, 8, 16, 32, 64, 128};
  c.samples = 1'000'000;
  c.horizon = 12.0;
  c.delta = 0.0;
  c.workers = default_workers();
  return c;
}

ExperimentConfig masked_converge_defaults() {
  ExperimentConfig c;
  c.model = ModelKind::masked_toy;
  c.methods = {Method::tau_leaping, Method::theta_trapezoidal};
  c.thetas = {0.5};
  c.steps = {16, 32, 64, 128, 256, 512};
  c.samples = 200'000;
  c.horizon = 1.0;
  c.delta = kDefaultMaskDelta;
  c.workers = default_workers();
  return c;
}

ExperimentConfig exact_check_defaults() {
  ExperimentConfig c = toy_converge_defaults();
  c.methods = {Method::uniformization};
  c.steps = {64};
  return c;
}

namespace {

constexpr std::uint64_t kBootstrapTag = 0xB0075747'00000001ULL;

struct CellOutput {
  ResultRow row;
  NfeSummary nfe;
  std::vector<std::string> warnings;
};

NfeSummary summarize_nfe(const std::vector<std::int64_t>& nfe) {
  NfeSummary s;
  if (nfe.empty()) return s;
  const double n = static_cast<double>(nfe.size());
  double sum = 0.0;
  for (auto v : nfe) sum += static_cast<double>(v);
  s.mean = sum / n;
  double var = 0.0;
  for (auto v : nfe) var += (static_cast<double>(v) - s.mean) * (static_cast<double>(v) - s.mean);
  s.stddev = nfe.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  std::vector<std::int64_t> sorted = nfe;
  const auto k = static_cast<std::size_t>(std::ceil(0.95 * n)) - 1;
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
  s.p95 = static_cast<double>(sorted[k]);
  return s;
}

CellOutput run_cell(const ExperimentConfig& config, const DiffusionModel& model,
                    const ProbabilityVector<double>& target, Method method,
                    std::optional<double> theta, int steps) {
  SolverConfig solver;
  solver.method = method;
  solver.theta = theta.value_or(0.5);
  solver.grid = make_time_grid(model.horizon(), config.delta, steps, solver.theta);
  solver.seed = config.seed;
  solver.workers = config.workers;

  CellOutput out;
  out.warnings = solver.validate();

  const auto t0 = std::chrono::steady_clock::now();
  SampleBatch batch = run_sampler(solver, model, config.samples);
  const auto t1 = std::chrono::steady_clock::now();

  const EmpiricalDistribution counts = empirical_distribution(batch.samples, target.size());
  const std::uint64_t boot_seed = RandomStream(config.seed).split(kBootstrapTag).key();
  const KlReport report =
      bootstrap_kl_ci(counts, target, config.bootstrap, config.ci_level, boot_seed);

  ResultRow& row = out.row;
  row.method = std::string(to_string(method));
  row.theta = theta;
  row.steps = steps;
  out.nfe = summarize_nfe(batch.nfe_per_trajectory);
  row.nfe = out.nfe.mean;
  row.kl = report.estimate;
  row.ci_lo = report.lo;
  row.ci_hi = report.hi;
  row.positivity_frac = batch.telemetry.positivity_fraction();
  row.rejection_frac = batch.telemetry.rejection_fraction();
  row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  row.seed = config.seed;
  return out;
}

ExperimentResult run_study(const ExperimentConfig& config, const DiffusionModel& model,
                           const ProbabilityVector<double>& target) {
  ExperimentResult result;
  result.support = target.size();
  result.noise_floor = noise_floor(config.samples, result.support);

  for (Method method : config.methods) {
    std::vector<std::optional<double>> thetas;
    if (uses_theta(method))
      thetas.assign(config.thetas.begin(), config.thetas.end());
    else
      thetas.push_back(std::nullopt);
    for (const auto& theta : thetas) {
      for (int n : config.steps) {
        CellOutput cell = run_cell(config, model, target, method, theta, n);
        result.rows.push_back(cell.row);
        result.nfe.push_back(cell.nfe);
        for (auto& w : cell.warnings)
          if (std::find(result.warnings.begin(), result.warnings.end(), w) == result.warnings.end())
            result.warnings.push_back(std::move(w));
      }
      if (method == Method::uniformization) continue;
      auto fit = fit_rows(result.rows, std::string(to_string(method)), theta, result.noise_floor,
                          config.min_fit_steps);
      if (fit) result.fits.push_back(std::move(*fit));
    }
  }
  return result;
}

ProbabilityVector<double> toy_target(const ExperimentConfig& config) {
  if (config.target_file) {
    const TargetTable table = TargetTable::load(*config.target_file);
    require(table.dims() == 1, ErrorKind::config,
            "toy model: target file must have dims 1 (got a joint table)");
    return table.distribution();
  }
  return TargetTable::random(1, config.sites, config.target_seed).distribution();
}

}  // namespace

std::optional<MethodFit> fit_rows(const std::vector<ResultRow>& rows, const std::string& method,
                                  std::optional<double> theta, double floor,
                                  std::optional<double> min_steps, double floor_factor) {
  MethodFit out;
  out.method = method;
  out.theta = theta;
  std::vector<ConvergencePoint> points;
  for (const auto& r : rows) {
    if (r.method != method || r.theta != theta) continue;
    if (!std::isfinite(r.kl) || r.kl <= floor_factor * floor) continue;
    if (min_steps && r.steps < *min_steps) continue;
    points.push_back({static_cast<double>(r.steps), r.kl});
    out.window.push_back(r.steps);
  }
  if (points.size() < 2) return std::nullopt;
  out.fit = fit_loglog_slope(points);
  return out;
}

ExperimentResult cmd_toy_converge(const ExperimentConfig& config) {
  require(config.model == ModelKind::toy_uniform, ErrorKind::config,
          "toy-converge: model must be toy-uniform");
  config.validate();
  const UniformToyModel model(toy_target(config), config.horizon);
  return run_study(config, model, model.target());
}

ExperimentResult cmd_masked_converge(const ExperimentConfig& config) {
  require(config.model == ModelKind::masked_toy, ErrorKind::config,
          "masked-converge: model must be masked-toy");
  config.validate();
  auto table = std::make_shared<const TargetTable>(
      config.target_file ? TargetTable::load(*config.target_file)
                         : TargetTable::random(config.dims, config.vocab, config.target_seed));
  const MaskedModel model(table, NoiseSchedule{});
  return run_study(config, model, table->distribution());
}

ExperimentResult cmd_exact_check(const ExperimentConfig& config) {
  require(config.model == ModelKind::toy_uniform, ErrorKind::config,
          "exact-check: model must be toy-uniform");
  for (Method m : config.methods)
    require(m == Method::uniformization, ErrorKind::config,
            "exact-check: only the uniformization method is supported");
  return cmd_toy_converge(config);
}

std::string summarize(const ExperimentResult& result) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "support %lld, noise floor %.3e\n",
                static_cast<long long>(result.support), result.noise_floor);
  os << buf;
  std::snprintf(buf, sizeof buf, "%-18s %6s %6s %10s %11s %11s %11s %9s %9s %10s\n", "method",
                "theta", "N", "nfe", "kl", "ci_lo", "ci_hi", "positive", "rejected", "wall_ms");
  os << buf;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    std::string theta = r.theta ? std::to_string(*r.theta).substr(0, 5) : "-";
    std::snprintf(buf, sizeof buf, "%-18s %6s %6d %10.2f %11.4e %11.4e %11.4e %9.5f %9.5f %10.0f\n",
                  r.method.c_str(), theta.c_str(), r.steps, r.nfe, r.kl, r.ci_lo, r.ci_hi,
                  r.positivity_frac, r.rejection_frac, r.wall_ms);
    os << buf;
    if (r.method == to_string(Method::uniformization) && i < result.nfe.size()) {
      std::snprintf(buf, sizeof buf, "  nfe: mean %.3f, sd %.3f, p95 %.0f\n", result.nfe[i].mean,
                    result.nfe[i].stddev, result.nfe[i].p95);
      os << buf;
    }
  }
  for (const auto& f : result.fits) {
    std::string window;
    for (int n : f.window) window += (window.empty() ? "" : ",") + std::to_string(n);
    std::snprintf(buf, sizeof buf, "fit %-18s order %.3f  r2 %.4f  over N = {%s}\n",
                  f.method.c_str(), f.fit.order(), f.fit.r_squared, window.c_str());
    os << buf;
  }
  for (const auto& w : result.warnings) os << "warning: " << w << '\n';
  return os.str();
}

}  // namespace ddiff
