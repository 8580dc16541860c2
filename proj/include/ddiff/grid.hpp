#pragma once

#include <utility>
#include <vector>

namespace ddiff {

enum class GridSchedule { uniform };

/// Reverse-time discretization 0 = s_0 < ... < s_N = T - delta together with
/// the theta-section points rho_n = (1 - theta) s_n + theta s_{n+1}.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(std::vector<double> points, double theta, double horizon, double delta);

  int steps() const { return static_cast<int>(points_.size()) - 1; }
  double theta() const { return theta_; }
  double horizon() const { return horizon_; }
  double delta() const { return delta_; }

  double point(int n) const { return points_[n]; }
  double step(int n) const { return points_[n + 1] - points_[n]; }
  /// theta-section point of interval n; rho_n - s_n equals theta * step(n).
  double section(int n) const { return points_[n] + theta_ * step(n); }
  /// kappa = max step.
  double max_step() const;

  const std::vector<double>& points() const { return points_; }

 private:
  std::vector<double> points_;
  double theta_ = 0.5;
  double horizon_ = 0.0;
  double delta_ = 0.0;
};

/// Uniform grid over [0, T - delta] with N steps. delta = 0 is permitted
/// (uniform-state models have no singularity at the data end).
TimeGrid make_time_grid(double horizon, double delta, int steps, double theta,
                        GridSchedule schedule = GridSchedule::uniform);

/// alpha1 = 1 / (2 theta (1 - theta)), alpha2 = ((1-theta)^2 + theta^2) / (2 theta (1 - theta)).
std::pair<double, double> alpha_coefficients(double theta);

}  // namespace ddiff
