#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ddiff/ctmc.hpp"

namespace ddiff {

/// Counts per state over M samples.
class EmpiricalDistribution {
 public:
  EmpiricalDistribution() = default;
  explicit EmpiricalDistribution(Vector<std::int64_t> counts);

  const Vector<std::int64_t>& counts() const { return counts_; }
  std::int64_t total() const { return total_; }
  Eigen::Index size() const { return counts_.size(); }
  Vector<double> frequencies() const;

 private:
  Vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

/// Samples are 0-based state indices in [0, S).
EmpiricalDistribution empirical_distribution(std::span<const std::int64_t> samples,
                                             std::int64_t sites);

/// KL divergence in nats. `infinite` flags q(i) = 0 while p(i) > 0, in which
/// case `nats` is +inf.
struct KlValue {
  double nats = 0.0;
  bool infinite = false;
};

KlValue kl_divergence(const ProbabilityVector<double>& p, const ProbabilityVector<double>& q);

enum class Smoothing { none, add_inverse_m };

/// KL(p || q_hat) with q_hat the empirical frequencies. With
/// Smoothing::add_inverse_m every cell receives an extra 1/M of mass before
/// renormalizing.
KlValue kl_divergence(const ProbabilityVector<double>& p, const EmpiricalDistribution& q,
                      Smoothing smoothing = Smoothing::none);

struct KlReport {
  double estimate = 0.0;  ///< plug-in KL on the full sample
  bool estimate_infinite = false;
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  int resamples = 0;
  std::int64_t samples = 0;
  int infinite_resamples = 0;  ///< resamples with KL = +inf, excluded from the interval
  double resample_mean = 0.0;
  double resample_stderr = 0.0;  ///< standard deviation across resamples
};

inline constexpr int kDefaultBootstrap = 1000;
inline constexpr double kDefaultCiLevel = 0.95;

/// Percentile bootstrap CI. Resampling M draws with replacement from the
/// sample is done through the equivalent multinomial draw on the counts.
KlReport bootstrap_kl_ci(const EmpiricalDistribution& counts, const ProbabilityVector<double>& p0,
                         int resamples = kDefaultBootstrap, double level = kDefaultCiLevel,
                         std::uint64_t seed = 0);
KlReport bootstrap_kl_ci(std::span<const std::int64_t> samples,
                         const ProbabilityVector<double>& p0, int resamples = kDefaultBootstrap,
                         double level = kDefaultCiLevel, std::uint64_t seed = 0);

/// First-order bias (support - 1) / (2 M) of the plug-in KL estimator under p = q.
double noise_floor(std::int64_t samples, std::int64_t support);

struct ConvergenceFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int points = 0;

  double order() const { return -slope; }
};

struct ConvergencePoint {
  double steps = 0.0;
  double kl = 0.0;
};

/// OLS of log(kl) on log(steps). Points with steps < min_steps are dropped.
ConvergenceFit fit_loglog_slope(std::span<const ConvergencePoint> points,
                                std::optional<double> min_steps = std::nullopt);

}  // namespace ddiff
