#pragma once

// Goodness-of-fit helpers shared by the unit tests and the acceptance suite.

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace test_stats {

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

/// Pearson chi-square of observed vs expected counts (same length).
inline ChiSquare chi_square(const std::vector<double>& observed, const std::vector<double>& expected,
                            int fitted_params = 0) {
  ChiSquare out;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    out.statistic += d * d / expected[i];
  }
  out.dof = static_cast<int>(observed.size()) - 1 - fitted_params;
  out.p_value = out.dof > 0 ? boost::math::gamma_q(0.5 * out.dof, 0.5 * out.statistic) : 1.0;
  return out;
}

/// Chi-square test of integer draws against Poisson(mean). Bins 0, 1, ...
/// are kept while their expected count is at least 5; the remaining upper
/// tail forms one final bin.
inline ChiSquare poisson_chi_square(const std::vector<std::int64_t>& draws, double mean) {
  const double n = static_cast<double>(draws.size());
  std::vector<double> expected, observed;
  double pk = std::exp(-mean), cdf = 0.0;
  int k = 0;
  while (n * pk >= 5.0 && n * (1.0 - cdf - pk) >= 5.0) {
    expected.push_back(n * pk);
    cdf += pk;
    ++k;
    pk *= mean / k;
  }
  expected.push_back(n * (1.0 - cdf));
  observed.assign(expected.size(), 0.0);
  const auto last = static_cast<std::int64_t>(expected.size()) - 1;
  for (auto d : draws) observed[static_cast<std::size_t>(d < last ? d : last)] += 1.0;
  return chi_square(observed, expected);
}

}  // namespace test_stats
