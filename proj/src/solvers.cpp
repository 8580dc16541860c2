#include "ddiff/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "ddiff/error.hpp"

namespace ddiff {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::euler: return "euler";
    case Method::tau_leaping: return "tau-leaping";
    case Method::uniformization: return "uniformization";
    case Method::theta_rk2: return "theta-rk2";
    case Method::theta_trapezoidal: return "theta-trapezoidal";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::euler, Method::tau_leaping, Method::uniformization,
                   Method::theta_rk2, Method::theta_trapezoidal})
    if (name == to_string(m)) return m;
  fail(ErrorKind::config, "unknown method '" + std::string(name) + "'");
}

bool is_two_stage(Method m) { return m == Method::theta_rk2 || m == Method::theta_trapezoidal; }
bool uses_theta(Method m) { return is_two_stage(m); }

namespace {

struct Block {
  int begin;
  int length;
};

// Jumps touching coordinate c occupy a contiguous block of the jump index.
Block coordinate_block(const JumpSpace& space, int c) {
  if (space.dims() == 1) return {0, space.size()};
  const int sites = space.spec().sites;
  return {c * sites, sites};
}

// Picks the jump in [b.begin, b.begin + b.length) hit by target in [0, total).
int pick_jump(const Vector<double>& rates, Block b, double target) {
  int last_positive = -1;
  double cumulative = 0.0;
  for (int j = b.begin; j < b.begin + b.length; ++j) {
    if (rates(j) <= 0.0) continue;
    cumulative += rates(j);
    last_positive = j;
    if (target < cumulative) return j;
  }
  return last_positive;
}

void check_rates(const Vector<double>& rates) {
  for (Eigen::Index j = 0; j < rates.size(); ++j)
    require(rates(j) >= 0.0 && std::isfinite(rates(j)), ErrorKind::numerical,
            "negative or non-finite rate passed to a Poisson draw");
}

// Applies one chosen jump per coordinate (at most), asserting the single-jump rule.
State apply_jumps(const JumpSpace& space, const State& y, const int* chosen, StepTelemetry& tel) {
  State next = y;
  State scratch;
  for (int c = 0; c < space.dims(); ++c) {
    if (chosen[c] < 0) continue;
    const bool ok = space.apply(next, chosen[c], scratch);
    require(ok, ErrorKind::numerical, "intensity assigned rate to a jump leaving the state space");
    next = scratch;
    ++tel.applied_jumps;
  }
  int changed = 0;
  for (int c = 0; c < space.dims(); ++c) changed += (next(c) != y(c));
  require(changed <= tel.applied_jumps, ErrorKind::numerical, "single-jump rule violated");
  return next;
}

State leap(const JumpSpace& space, const State& y, const Vector<double>& rates, double dt,
           RandomStream& rng, StepTelemetry& tel) {
  check_rates(rates);
  ++tel.updates;
  int chosen[kMaxDims];
  bool reject = false;
  for (int c = 0; c < space.dims(); ++c) {
    chosen[c] = -1;
    const Block b = coordinate_block(space, c);
    const double total = rates.segment(b.begin, b.length).sum();
    if (total <= 0.0) continue;
    const std::int64_t k = poisson(rng, total * dt);
    tel.drawn_jumps += k;
    if (k >= 2) reject = true;
    if (k == 1) chosen[c] = pick_jump(rates, b, rng.uniform() * total);
  }
  if (reject) {
    ++tel.rejected_steps;
    return y;
  }
  return apply_jumps(space, y, chosen, tel);
}

}  // namespace

StepResult tau_leaping_step(const JumpSpace& space, const State& y, const Intensity& mu,
                            double dt, RandomStream& rng) {
  require(dt > 0.0, ErrorKind::domain, "tau-leaping: dt must be positive");
  require(mu.size() == space.size(), ErrorKind::data, "tau-leaping: intensity size mismatch");
  StepResult out;
  out.state = leap(space, y, mu.rates(), dt, rng, out.telemetry);
  return out;
}

StepResult euler_step(const JumpSpace& space, const State& y, const Intensity& mu, double dt,
                      RandomStream& rng) {
  require(dt > 0.0, ErrorKind::domain, "euler: dt must be positive");
  require(mu.size() == space.size(), ErrorKind::data, "euler: intensity size mismatch");
  check_rates(mu.rates());
  StepResult out;
  ++out.telemetry.updates;
  int chosen[kMaxDims];
  for (int c = 0; c < space.dims(); ++c) {
    chosen[c] = -1;
    const Block b = coordinate_block(space, c);
    const double total = mu.rates().segment(b.begin, b.length).sum();
    if (total * dt >= 1.0) {
      std::ostringstream msg;
      msg << "euler: step too large (total rate * dt = " << total * dt << " >= 1)";
      fail(ErrorKind::numerical, msg.str());
    }
    const double u = rng.uniform();
    if (total > 0.0 && u < total * dt) {
      chosen[c] = pick_jump(mu.rates(), b, u / dt);
      ++out.telemetry.drawn_jumps;
    }
  }
  out.state = apply_jumps(space, y, chosen, out.telemetry);
  return out;
}

namespace {

void check_step_args(const State& y, int n, const TimeGrid& grid, const IntensityOracle& oracle) {
  require(n >= 0 && n < grid.steps(), ErrorKind::domain, "step: interval index out of range");
  require(y.size() == oracle.jumps().dims(), ErrorKind::data, "step: state has wrong dimension");
}

void record_negative(ClampPolicy clamp, StepTelemetry& tel) {
  ++tel.negative_intensity_events;
  if (clamp == ClampPolicy::error_on_negative)
    fail(ErrorKind::numerical, "negative combined intensity under error-on-negative policy");
}

}  // namespace

StepResult theta_rk2_step(const State& y, int n, const TimeGrid& grid,
                          const IntensityOracle& oracle, ClampPolicy clamp, RandomStream& rng,
                          StepWorkspace& ws) {
  check_step_args(y, n, grid, oracle);
  const JumpSpace& space = oracle.jumps();
  const double theta = grid.theta();
  const double dt = grid.step(n);
  StepResult out;
  StepTelemetry& tel = out.telemetry;

  oracle.evaluate(grid.point(n), y, ws.current);
  ++tel.nfe;
  RandomStream stage1 = rng.split(kStageOne);
  const State mid = leap(space, y, ws.current.rates(), theta * dt, stage1, tel);

  oracle.evaluate(grid.section(n), mid, ws.section);
  ++tel.nfe;

  // 1{mu > 0} [(1 - 1/(2 theta)) mu + 1/(2 theta) mu*]_+
  const double w_section = 1.0 / (2.0 * theta);
  const double w_current = 1.0 - w_section;
  ws.combined.reset(space.size());
  auto& combined = ws.combined.rates();
  const auto& cur = ws.current.rates();
  const auto& sec = ws.section.rates();
  for (int j = 0; j < space.size(); ++j) {
    if (cur(j) <= 0.0) continue;
    ++tel.total_intensity_terms;
    const double raw = w_current * cur(j) + w_section * sec(j);
    if (raw < 0.0) {
      record_negative(clamp, tel);
      continue;
    }
    combined(j) = raw;
  }

  RandomStream stage2 = rng.split(kStageTwo);
  out.state = leap(space, y, combined, dt, stage2, tel);
  return out;
}

StepResult theta_rk2_step(const State& y, int n, const TimeGrid& grid,
                          const IntensityOracle& oracle, ClampPolicy clamp, RandomStream& rng) {
  StepWorkspace ws;
  return theta_rk2_step(y, n, grid, oracle, clamp, rng, ws);
}

StepResult theta_trapezoidal_step(const State& y, int n, const TimeGrid& grid,
                                  const IntensityOracle& oracle, ClampPolicy clamp,
                                  RandomStream& rng, StepWorkspace& ws) {
  check_step_args(y, n, grid, oracle);
  const JumpSpace& space = oracle.jumps();
  const double theta = grid.theta();
  const auto [alpha1, alpha2] = alpha_coefficients(theta);
  const double dt = grid.step(n);
  StepResult out;
  StepTelemetry& tel = out.telemetry;

  oracle.evaluate(grid.point(n), y, ws.current);
  ++tel.nfe;
  RandomStream stage1 = rng.split(kStageOne);
  const State mid = leap(space, y, ws.current.rates(), theta * dt, stage1, tel);

  oracle.evaluate(grid.section(n), mid, ws.section);
  ++tel.nfe;

  // (alpha1 mu* - alpha2 mu)_+ ; only jumps valid from the intermediate
  // state (mu* > 0) can carry rate, and only those are counted as terms.
  ws.combined.reset(space.size());
  auto& combined = ws.combined.rates();
  const auto& cur = ws.current.rates();
  const auto& sec = ws.section.rates();
  for (int j = 0; j < space.size(); ++j) {
    if (sec(j) <= 0.0) continue;
    ++tel.total_intensity_terms;
    const double raw = alpha1 * sec(j) - alpha2 * cur(j);
    if (raw < 0.0) {
      record_negative(clamp, tel);
      continue;
    }
    combined(j) = raw;
  }

  RandomStream stage2 = rng.split(kStageTwo);
  out.state = leap(space, mid, combined, (1.0 - theta) * dt, stage2, tel);
  return out;
}

StepResult theta_trapezoidal_step(const State& y, int n, const TimeGrid& grid,
                                  const IntensityOracle& oracle, ClampPolicy clamp,
                                  RandomStream& rng) {
  StepWorkspace ws;
  return theta_trapezoidal_step(y, n, grid, oracle, clamp, rng, ws);
}

namespace {

StepResult uniformization_impl(const IntensityOracle& oracle, double s_lo, double s_hi,
                               const State& y0, RandomStream& rng, Intensity& mu) {
  require(s_hi > s_lo, ErrorKind::domain, "uniformization: empty window");
  const JumpSpace& space = oracle.jumps();
  const double bound = oracle.intensity_bound(s_lo, s_hi);
  require(bound >= 0.0 && std::isfinite(bound), ErrorKind::numerical,
          "uniformization: intensity bound must be finite and nonnegative");

  StepResult out;
  out.state = y0;
  if (bound == 0.0) return out;
  StepTelemetry& tel = out.telemetry;
  State next;
  double s = s_lo;
  for (;;) {
    s += rng.exponential() / bound;
    if (s > s_hi) break;
    oracle.evaluate(s, out.state, mu);
    ++tel.nfe;
    ++tel.updates;
    const double total = total_intensity(mu);
    if (total > bound * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "uniformization: observed total intensity " << total << " exceeds bound " << bound
          << " at s=" << s;
      fail(ErrorKind::numerical, msg.str());
    }
    const double u = rng.uniform() * bound;
    if (u >= total) continue;
    const int j = pick_jump(mu.rates(), {0, space.size()}, u);
    require(j >= 0 && space.apply(out.state, j, next), ErrorKind::numerical,
            "uniformization: intensity assigned rate to an invalid jump");
    out.state = next;
    ++tel.drawn_jumps;
    ++tel.applied_jumps;
  }
  return out;
}

}  // namespace

StepResult uniformization_sample(const IntensityOracle& oracle, double s_lo, double s_hi,
                                 const State& y0, RandomStream& rng) {
  Intensity mu;
  return uniformization_impl(oracle, s_lo, s_hi, y0, rng, mu);
}

std::vector<std::string> SolverConfig::validate() const {
  std::vector<std::string> warnings;
  require(grid.steps() >= 1, ErrorKind::config, "solver config: grid is empty");
  require(theta > 0.0 && theta <= 1.0, ErrorKind::config, "solver config: theta must lie in (0, 1]");
  require(workers >= 1, ErrorKind::config, "solver config: workers must be >= 1");
  if (uses_theta(method))
    require(grid.theta() == theta, ErrorKind::config, "solver config: grid theta differs from theta");
  if (method == Method::theta_trapezoidal)
    require(theta < 1.0, ErrorKind::config,
            "theta-trapezoidal requires theta < 1 (alpha coefficients diverge at theta = 1)");
  if (method == Method::theta_rk2 && theta > 0.5)
    warnings.push_back("theta-rk2 with theta > 1/2: second-order accuracy is only guaranteed for theta <= 1/2");
  return warnings;
}

namespace {

constexpr std::uint64_t kInitTag = 0xA11CE000'00000001ULL;
constexpr std::uint64_t kFinalTag = 0xA11CE000'00000002ULL;

// Runs one full trajectory; returns the final state and accumulates telemetry.
State run_trajectory(const SolverConfig& cfg, const DiffusionModel& model, std::int64_t index,
                     StepWorkspace& ws, StepTelemetry& tel) {
  const RandomStream traj = RandomStream(cfg.seed).split(static_cast<std::uint64_t>(index));
  RandomStream init = traj.split(kInitTag);
  State y = model.initial_state(init);
  const TimeGrid& grid = cfg.grid;
  const JumpSpace& space = model.jumps();

  for (int n = 0; n < grid.steps(); ++n) {
    RandomStream interval = traj.split(static_cast<std::uint64_t>(n));
    StepResult r;
    switch (cfg.method) {
      case Method::tau_leaping:
      case Method::euler: {
        model.evaluate(grid.point(n), y, ws.current);
        RandomStream stage = interval.split(kStageOne);
        r = cfg.method == Method::euler
                ? euler_step(space, y, ws.current, grid.step(n), stage)
                : tau_leaping_step(space, y, ws.current, grid.step(n), stage);
        r.telemetry.nfe += 1;
        break;
      }
      case Method::theta_rk2:
        r = theta_rk2_step(y, n, grid, model, cfg.clamp, interval, ws);
        break;
      case Method::theta_trapezoidal:
        r = theta_trapezoidal_step(y, n, grid, model, cfg.clamp, interval, ws);
        break;
      case Method::uniformization:
        r = uniformization_impl(model, grid.point(n), grid.point(n + 1), y, interval, ws.current);
        break;
    }
    y = r.state;
    tel += r.telemetry;
  }
  RandomStream fin = traj.split(kFinalTag);
  model.finalize(y, fin);
  return y;
}

struct WorkerFailure {
  std::int64_t index = -1;
  std::exception_ptr error;
};

}  // namespace

SampleBatch run_sampler(const SolverConfig& config, const DiffusionModel& model,
                        std::int64_t n_samples) {
  require(n_samples >= 1, ErrorKind::config, "run_sampler: n_samples must be >= 1");
  config.validate();

  SampleBatch batch;
  batch.samples.assign(static_cast<std::size_t>(n_samples), 0);
  batch.nfe_per_trajectory.assign(static_cast<std::size_t>(n_samples), 0);

  const int workers = static_cast<int>(std::min<std::int64_t>(config.workers, n_samples));
  std::vector<StepTelemetry> partial(workers);
  std::vector<WorkerFailure> failures(workers);

  auto work = [&](int w) {
    StepWorkspace ws;
    const std::int64_t begin = n_samples * w / workers;
    const std::int64_t end = n_samples * (w + 1) / workers;
    for (std::int64_t i = begin; i < end; ++i) {
      try {
        StepTelemetry tel;
        const State y = run_trajectory(config, model, i, ws, tel);
        batch.samples[i] = model.sample_index(y);
        batch.nfe_per_trajectory[i] = tel.nfe;
        partial[w] += tel;
      } catch (...) {
        failures[w] = {i, std::current_exception()};
        return;
      }
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }

  // Report the failure with the lowest trajectory index so that error output
  // does not depend on the worker count.
  const WorkerFailure* first = nullptr;
  for (const auto& f : failures)
    if (f.error && (!first || f.index < first->index)) first = &f;
  if (first) {
    try {
      std::rethrow_exception(first->error);
    } catch (const Error& e) {
      throw Error(e.kind(), "trajectory " + std::to_string(first->index) + ": " + e.what());
    }
  }

  for (const auto& t : partial) batch.telemetry += t;
  return batch;
}

}  // namespace ddiff
