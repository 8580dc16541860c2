#include "ddiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ddiff/error.hpp"
#include "ddiff/random.hpp"

namespace ddiff {

EmpiricalDistribution::EmpiricalDistribution(Vector<std::int64_t> counts)
    : counts_(std::move(counts)) {
  require(counts_.size() >= 1, ErrorKind::data, "empirical distribution: no states");
  for (Eigen::Index i = 0; i < counts_.size(); ++i)
    require(counts_(i) >= 0, ErrorKind::data, "empirical distribution: negative count");
  total_ = counts_.sum();
  require(total_ >= 1, ErrorKind::data, "empirical distribution: no samples");
}

Vector<double> EmpiricalDistribution::frequencies() const {
  return counts_.cast<double>() / static_cast<double>(total_);
}

EmpiricalDistribution empirical_distribution(std::span<const std::int64_t> samples,
                                             std::int64_t sites) {
  require(!samples.empty(), ErrorKind::data, "empirical distribution: empty sample");
  require(sites >= 1, ErrorKind::data, "empirical distribution: no states");
  Vector<std::int64_t> counts = Vector<std::int64_t>::Zero(sites);
  for (const auto x : samples) {
    if (x < 0 || x >= sites)
      fail(ErrorKind::data, "empirical distribution: sample " + std::to_string(x) + " out of range");
    ++counts(x);
  }
  return EmpiricalDistribution(std::move(counts));
}

namespace {

template <typename QFn>
KlValue kl_impl(const Vector<double>& p, Eigen::Index n, QFn q) {
  KlValue out;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p(i) <= 0.0) continue;
    const double qi = q(i);
    if (qi <= 0.0) {
      out.infinite = true;
      out.nats = std::numeric_limits<double>::infinity();
      return out;
    }
    sum += p(i) * std::log(p(i) / qi);
  }
  // Gibbs: KL >= 0; clip round-off.
  out.nats = std::max(sum, 0.0);
  return out;
}

}  // namespace

KlValue kl_divergence(const ProbabilityVector<double>& p, const ProbabilityVector<double>& q) {
  require(p.size() == q.size(), ErrorKind::data, "kl divergence: size mismatch");
  const auto& qp = q.probs();
  return kl_impl(p.probs(), p.size(), [&](Eigen::Index i) { return qp(i); });
}

KlValue kl_divergence(const ProbabilityVector<double>& p, const EmpiricalDistribution& q,
                      Smoothing smoothing) {
  require(p.size() == q.size(), ErrorKind::data, "kl divergence: size mismatch");
  const double m = static_cast<double>(q.total());
  const auto& c = q.counts();
  if (smoothing == Smoothing::add_inverse_m) {
    const double norm = 1.0 + static_cast<double>(q.size()) / m;
    return kl_impl(p.probs(), p.size(),
                   [&](Eigen::Index i) { return (static_cast<double>(c(i)) / m + 1.0 / m) / norm; });
  }
  return kl_impl(p.probs(), p.size(),
                 [&](Eigen::Index i) { return static_cast<double>(c(i)) / m; });
}

namespace {

// Empirical quantile with linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

KlReport bootstrap_kl_ci(const EmpiricalDistribution& counts, const ProbabilityVector<double>& p0,
                         int resamples, double level, std::uint64_t seed) {
  require(resamples >= 2, ErrorKind::config, "bootstrap: need at least 2 resamples");
  require(level > 0.0 && level < 1.0, ErrorKind::config, "bootstrap: level must lie in (0, 1)");
  require(counts.size() == p0.size(), ErrorKind::data, "bootstrap: size mismatch");

  KlReport report;
  report.level = level;
  report.resamples = resamples;
  report.samples = counts.total();
  const KlValue point = kl_divergence(p0, counts);
  report.estimate = point.nats;
  report.estimate_infinite = point.infinite;

  const Vector<double> freq = counts.frequencies();
  const Eigen::Index n = counts.size();
  const RandomStream root(seed);
  std::vector<double> finite;
  finite.reserve(resamples);
  Vector<std::int64_t> draw(n);
  for (int b = 0; b < resamples; ++b) {
    // Multinomial(M, freq) through sequential conditional binomials.
    RandomStream rng = root.split(static_cast<std::uint64_t>(b));
    std::int64_t remaining = counts.total();
    double mass_left = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == n - 1 || remaining == 0) {
        draw(i) = remaining;
        remaining = 0;
        continue;
      }
      const double pr = mass_left > 0.0 ? std::clamp(freq(i) / mass_left, 0.0, 1.0) : 0.0;
      std::binomial_distribution<std::int64_t> binom(remaining, pr);
      draw(i) = binom(rng);
      remaining -= draw(i);
      mass_left -= freq(i);
    }
    const KlValue kl = kl_divergence(p0, EmpiricalDistribution(draw));
    if (kl.infinite)
      ++report.infinite_resamples;
    else
      finite.push_back(kl.nats);
  }

  if (finite.empty()) {
    report.lo = report.hi = std::numeric_limits<double>::infinity();
    report.resample_mean = std::numeric_limits<double>::infinity();
    return report;
  }
  std::sort(finite.begin(), finite.end());
  const double tail = (1.0 - level) / 2.0;
  report.lo = quantile(finite, tail);
  report.hi = quantile(finite, 1.0 - tail);
  double mean = 0.0;
  for (double v : finite) mean += v;
  mean /= static_cast<double>(finite.size());
  double var = 0.0;
  for (double v : finite) var += (v - mean) * (v - mean);
  report.resample_mean = mean;
  report.resample_stderr =
      finite.size() > 1 ? std::sqrt(var / static_cast<double>(finite.size() - 1)) : 0.0;
  return report;
}

KlReport bootstrap_kl_ci(std::span<const std::int64_t> samples,
                         const ProbabilityVector<double>& p0, int resamples, double level,
                         std::uint64_t seed) {
  return bootstrap_kl_ci(empirical_distribution(samples, p0.size()), p0, resamples, level, seed);
}

double noise_floor(std::int64_t samples, std::int64_t support) {
  require(samples >= 1, ErrorKind::domain, "noise floor: M must be >= 1");
  require(support >= 2, ErrorKind::domain, "noise floor: support must be >= 2");
  return static_cast<double>(support - 1) / (2.0 * static_cast<double>(samples));
}

ConvergenceFit fit_loglog_slope(std::span<const ConvergencePoint> points,
                                std::optional<double> min_steps) {
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : points) {
    if (min_steps && p.steps < *min_steps) continue;
    require(p.steps > 0.0, ErrorKind::domain, "loglog fit: steps must be positive");
    require(p.kl > 0.0 && std::isfinite(p.kl), ErrorKind::domain,
            "loglog fit: kl values must be positive and finite");
    xy.emplace_back(std::log(p.steps), std::log(p.kl));
  }
  require(xy.size() >= 2, ErrorKind::data, "loglog fit: need at least 2 points");

  const double n = static_cast<double>(xy.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  require(sxx > 0.0, ErrorKind::data, "loglog fit: all steps identical");

  ConvergenceFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.points = static_cast<int>(xy.size());
  if (syy == 0.0) {
    fit.r_squared = 1.0;
  } else {
    double ss_res = 0.0;
    for (const auto& [x, y] : xy) {
      const double r = y - (fit.intercept + fit.slope * x);
      ss_res += r * r;
    }
    fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return fit;
}

}  // namespace ddiff
