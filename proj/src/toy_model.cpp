#include "ddiff/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ddiff {

UniformToyModel::UniformToyModel(ProbabilityVector<double> target, double horizon)
    : target_(std::move(target)),
      horizon_(horizon),
      space_(StateSpaceSpec{1, static_cast<int>(target_.size()), Topology::bounded}) {
  require(horizon > 0.0 && std::isfinite(horizon), ErrorKind::config,
          "toy model: horizon must be positive");
}

ProbabilityVector<double> UniformToyModel::marginal(double t) const {
  return forward_marginal_closed(target_, t);
}

void UniformToyModel::evaluate(double s, const State& y, Intensity& out) const {
  const int n = sites();
  out.reset(space_.size());
  const double t = std::max(horizon_ - s, 0.0);
  const double decay = std::exp(-t);
  const double floor = (1.0 - decay) / n;
  const auto& p0 = target_.probs();
  const int x = y(0);
  const double px = floor + decay * p0(x);
  if (!(px > 0.0))
    fail(ErrorKind::singular, "toy model: state " + std::to_string(x) +
                                  " has zero mass at reverse time " + std::to_string(s));
  const double scale = 1.0 / (n * px);
  auto& rates = out.rates();
  for (int z = 0; z < n; ++z) {
    if (z == x) continue;
    rates(space_.index_of_offset(z - x)) = (floor + decay * p0(z)) * scale;
  }
}

double UniformToyModel::intensity_bound(double s_lo, double s_hi) const {
  // Total rate out of y is (1 - p_t(y)) / (S p_t(y)), decreasing in p_t(y).
  // Each p_t(y) moves monotonically in t, so the window minimum sits at an
  // endpoint.
  const double p_min_target = target_.probs().minCoeff();
  const int n = sites();
  double bound = 0.0;
  for (double s : {s_lo, s_hi}) {
    const double t = std::max(horizon_ - s, 0.0);
    const double decay = std::exp(-t);
    const double p_min = (1.0 - decay) / n + decay * p_min_target;
    if (p_min <= 0.0) return std::numeric_limits<double>::infinity();
    bound = std::max(bound, (1.0 - p_min) / (n * p_min));
  }
  // Slack for round-off in the evaluated rates.
  return bound * (1.0 + 1e-12);
}

State UniformToyModel::initial_state(RandomStream& rng) const {
  const int n = sites();
  int x = static_cast<int>(rng.uniform() * n);
  return scalar_state(std::min(x, n - 1));
}

}  // namespace ddiff
