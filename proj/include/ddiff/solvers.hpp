#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ddiff/ctmc.hpp"
#include "ddiff/grid.hpp"
#include "ddiff/oracle.hpp"
#include "ddiff/random.hpp"

namespace ddiff {

enum class Method { euler, tau_leaping, uniformization, theta_rk2, theta_trapezoidal };

enum class ClampPolicy { clamp_at_zero, error_on_negative };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);
bool is_two_stage(Method m);
bool uses_theta(Method m);

struct StepTelemetry {
  std::int64_t nfe = 0;
  std::int64_t updates = 0;  ///< leap updates attempted (one per stage)
  std::int64_t rejected_steps = 0;
  std::int64_t negative_intensity_events = 0;
  std::int64_t total_intensity_terms = 0;
  std::int64_t drawn_jumps = 0;  ///< Poisson jump counts before rejection
  std::int64_t applied_jumps = 0;

  /// 1 - negative / terms, or 1 when no combined intensity was formed.
  double positivity_fraction() const {
    return total_intensity_terms == 0
               ? 1.0
               : 1.0 - double(negative_intensity_events) / double(total_intensity_terms);
  }
  double rejection_fraction() const {
    return updates == 0 ? 0.0 : double(rejected_steps) / double(updates);
  }

  StepTelemetry& operator+=(const StepTelemetry& o) {
    nfe += o.nfe;
    updates += o.updates;
    rejected_steps += o.rejected_steps;
    negative_intensity_events += o.negative_intensity_events;
    total_intensity_terms += o.total_intensity_terms;
    drawn_jumps += o.drawn_jumps;
    applied_jumps += o.applied_jumps;
    return *this;
  }
};

struct StepResult {
  State state;
  StepTelemetry telemetry;
};

/// Scratch buffers reused across steps of one trajectory.
struct StepWorkspace {
  Intensity current;
  Intensity section;
  Intensity combined;
};

/// Stream tags for the two stages of a step.
inline constexpr std::uint64_t kStageOne = 1;
inline constexpr std::uint64_t kStageTwo = 2;

/// One tau-leaping update with single-jump rejection: an independent Poisson
/// count with mean rate(nu) * dt is drawn for every jump; if any coordinate
/// receives more than one jump the whole update is rejected and y returned.
StepResult tau_leaping_step(const JumpSpace& space, const State& y, const Intensity& mu,
                            double dt, RandomStream& rng);

/// Linearized categorical step: jump nu with probability rate(nu) * dt,
/// otherwise stay. Factorized spaces draw once per coordinate.
/// Throws ErrorKind::numerical when sum rate * dt >= 1 on a coordinate.
StepResult euler_step(const JumpSpace& space, const State& y, const Intensity& mu, double dt,
                      RandomStream& rng);

/// Two-stage theta-RK-2 step over interval n of the grid.
StepResult theta_rk2_step(const State& y, int n, const TimeGrid& grid,
                          const IntensityOracle& oracle, ClampPolicy clamp, RandomStream& rng,
                          StepWorkspace& ws);
StepResult theta_rk2_step(const State& y, int n, const TimeGrid& grid,
                          const IntensityOracle& oracle, ClampPolicy clamp, RandomStream& rng);

/// Two-stage theta-Trapezoidal step over interval n of the grid.
StepResult theta_trapezoidal_step(const State& y, int n, const TimeGrid& grid,
                                  const IntensityOracle& oracle, ClampPolicy clamp,
                                  RandomStream& rng, StepWorkspace& ws);
StepResult theta_trapezoidal_step(const State& y, int n, const TimeGrid& grid,
                                  const IntensityOracle& oracle, ClampPolicy clamp,
                                  RandomStream& rng);

/// Exact simulation on (s_lo, s_hi] by thinning a Poisson clock whose rate is
/// the oracle's declared bound. One oracle call per candidate event.
/// Throws ErrorKind::numerical if an observed total intensity exceeds the bound.
StepResult uniformization_sample(const IntensityOracle& oracle, double s_lo, double s_hi,
                                 const State& y0, RandomStream& rng);

struct SolverConfig {
  Method method = Method::theta_trapezoidal;
  double theta = 0.5;
  TimeGrid grid;
  std::uint64_t seed = 0;
  ClampPolicy clamp = ClampPolicy::clamp_at_zero;
  int workers = 1;

  /// Throws on invalid settings; returns human-readable warnings.
  std::vector<std::string> validate() const;
};

struct SampleBatch {
  std::vector<std::int64_t> samples;
  StepTelemetry telemetry;
  std::vector<std::int64_t> nfe_per_trajectory;
};

/// Runs n_samples independent trajectories. Trajectory i draws all of its
/// randomness from streams keyed by (seed, i), so the output is identical
/// for any worker count.
SampleBatch run_sampler(const SolverConfig& config, const DiffusionModel& model,
                        std::int64_t n_samples);

}  // namespace ddiff
