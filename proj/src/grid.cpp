#include "ddiff/grid.hpp"

#include <algorithm>
#include <cmath>

#include "ddiff/error.hpp"

namespace ddiff {

TimeGrid::TimeGrid(std::vector<double> points, double theta, double horizon, double delta)
    : points_(std::move(points)), theta_(theta), horizon_(horizon), delta_(delta) {
  require(points_.size() >= 2, ErrorKind::config, "time grid needs at least one interval");
  require(theta_ > 0.0 && theta_ <= 1.0, ErrorKind::config, "time grid: theta must lie in (0, 1]");
  require(points_.front() == 0.0, ErrorKind::config, "time grid must start at 0");
  for (std::size_t i = 1; i < points_.size(); ++i)
    require(points_[i] > points_[i - 1], ErrorKind::config, "time grid must be strictly increasing");
}

double TimeGrid::max_step() const {
  double kappa = 0.0;
  for (int n = 0; n < steps(); ++n) kappa = std::max(kappa, step(n));
  return kappa;
}

TimeGrid make_time_grid(double horizon, double delta, int steps, double theta,
                        GridSchedule schedule) {
  require(std::isfinite(horizon) && horizon > 0.0, ErrorKind::config,
          "time grid: horizon must be positive");
  require(delta >= 0.0 && delta < horizon, ErrorKind::config,
          "time grid: early stop must satisfy 0 <= delta < T");
  require(steps >= 1, ErrorKind::config, "time grid: N must be >= 1");
  require(theta > 0.0 && theta <= 1.0, ErrorKind::config, "time grid: theta must lie in (0, 1]");

  std::vector<double> points(steps + 1);
  const double end = horizon - delta;
  switch (schedule) {
    case GridSchedule::uniform:
      for (int n = 0; n <= steps; ++n) points[n] = end * n / steps;
      break;
  }
  points.back() = end;
  return TimeGrid(std::move(points), theta, horizon, delta);
}

std::pair<double, double> alpha_coefficients(double theta) {
  require(theta > 0.0 && theta < 1.0, ErrorKind::domain,
          "alpha coefficients are undefined unless 0 < theta < 1");
  const double denom = 2.0 * theta * (1.0 - theta);
  const double alpha1 = 1.0 / denom;
  const double alpha2 = ((1.0 - theta) * (1.0 - theta) + theta * theta) / denom;
  return {alpha1, alpha2};
}

}  // namespace ddiff
