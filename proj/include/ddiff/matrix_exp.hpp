#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "ddiff/error.hpp"

namespace ddiff {

struct ExpmDiagnostics {
  int squarings = 0;
  int terms = 0;
  double scaled_norm = 0.0;
  double last_term_norm = 0.0;
};

/// Induced 1-norm (maximum absolute column sum).
template <typename Derived>
typename Derived::RealScalar norm1(const Eigen::MatrixBase<Derived>& a) {
  if (a.size() == 0) return 0;
  return a.cwiseAbs().colwise().sum().maxCoeff();
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled by 2^-k with k the smallest count bringing its
/// 1-norm to at most 0.5. Series terms are accumulated until the next term
/// has 1-norm below `term_tol`. Throws ErrorKind::numerical if the series
/// does not settle within `max_terms` terms.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> expm(
    const Eigen::MatrixBase<Derived>& a, ExpmDiagnostics* diag = nullptr,
    double term_tol = 1e-16, int max_terms = 64) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  require(a.rows() == a.cols(), ErrorKind::domain, "expm: matrix must be square");

  const auto n = a.rows();
  const double norm = static_cast<double>(norm1(a));
  require(std::isfinite(norm), ErrorKind::numerical, "expm: non-finite input");

  int squarings = 0;
  double scaled = norm;
  while (scaled > 0.5) {
    scaled *= 0.5;
    ++squarings;
  }
  const Mat scaled_a = a * Scalar(std::ldexp(1.0, -squarings));

  Mat result = Mat::Identity(n, n);
  Mat term = Mat::Identity(n, n);
  int k = 1;
  double term_norm = 1.0;
  for (; k <= max_terms; ++k) {
    term = (term * scaled_a) / Scalar(k);
    result += term;
    // ||A^{k+1}/(k+1)!|| <= ||term|| * ||A|| / (k+1)
    term_norm = static_cast<double>(norm1(term)) * scaled / (k + 1);
    if (term_norm < term_tol) break;
  }
  if (k > max_terms) {
    std::ostringstream msg;
    msg << "expm: Taylor series did not converge (norm=" << norm
        << ", squarings=" << squarings << ", terms=" << max_terms
        << ", last term norm=" << term_norm << ")";
    fail(ErrorKind::numerical, msg.str());
  }
  for (int i = 0; i < squarings; ++i) result = result * result;

  if (diag) *diag = {squarings, k, scaled, term_norm};
  return result;
}

}  // namespace ddiff
