#pragma once

// Finite-state CTMC primitives.
//
// Orientation convention used throughout: a RateMatrix Q acts on column
// probability vectors, dp/dt = Q p. Entry Q(y, x) is the rate of jumping
// FROM state x TO state y, so columns sum to zero.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>

#include "ddiff/error.hpp"
#include "ddiff/matrix_exp.hpp"

namespace ddiff {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Default tolerances. Callers may pass their own copy to override.
struct Tolerances {
  static constexpr double kNormalization = 1e-12;
  static constexpr double kCrossCheck = 1e-10;

  double normalization = kNormalization;
  double generator = kNormalization;
};

inline constexpr int kMaxDims = 8;

/// A point of [S]^d, stored without heap allocation.
using State = Eigen::Matrix<int, Eigen::Dynamic, 1, 0, kMaxDims, 1>;

inline State scalar_state(int x) {
  State s(1);
  s(0) = x;
  return s;
}

enum class Topology { bounded, periodic };

struct StateSpaceSpec {
  int dims = 1;
  int sites = 2;
  Topology topology = Topology::bounded;

  void validate() const {
    if (dims < 1 || dims > kMaxDims)
      fail(ErrorKind::config, "state space: dims must lie in [1, " + std::to_string(kMaxDims) + "]");
    require(sites >= 2, ErrorKind::config, "state space: sites must be >= 2");
  }

  std::int64_t cardinality() const {
    std::int64_t n = 1;
    for (int i = 0; i < dims; ++i) n *= sites;
    return n;
  }
};

/// Enumerates the jump set D for a StateSpaceSpec.
///
/// d = 1, bounded:  signed offsets nu in [-(S-1), S-1] \ {0}; index nu + S - 1.
/// d = 1, periodic: offsets nu in [1, S-1] applied modulo S; index nu - 1.
/// d > 1:           (coordinate, new value) pairs; index coord * S + value.
///                  A jump to the current value is not a jump.
class JumpSpace {
 public:
  explicit JumpSpace(StateSpaceSpec spec) : spec_(spec) {
    spec_.validate();
    if (spec_.dims == 1)
      size_ = spec_.topology == Topology::bounded ? 2 * spec_.sites - 1 : spec_.sites - 1;
    else
      size_ = spec_.dims * spec_.sites;
  }

  const StateSpaceSpec& spec() const { return spec_; }
  int size() const { return size_; }
  int dims() const { return spec_.dims; }

  bool is_offset_space() const { return spec_.dims == 1; }

  /// Signed offset of jump j (d = 1 only).
  int offset(int j) const {
    return spec_.topology == Topology::bounded ? j - (spec_.sites - 1) : j + 1;
  }
  int index_of_offset(int nu) const {
    return spec_.topology == Topology::bounded ? nu + spec_.sites - 1 : nu - 1;
  }
  int index_of_pair(int coord, int value) const { return coord * spec_.sites + value; }

  int coordinate(int j) const { return spec_.dims == 1 ? 0 : j / spec_.sites; }
  int new_value(int j) const { return j % spec_.sites; }

  /// Applies jump j to `from`. Returns false (leaving `to` unspecified) when
  /// the target leaves the state space or the jump is the identity.
  bool apply(const State& from, int j, State& to) const {
    to = from;
    if (spec_.dims == 1) {
      const int nu = offset(j);
      if (nu == 0) return false;
      int y = from(0) + nu;
      if (spec_.topology == Topology::periodic) {
        y %= spec_.sites;
      } else if (y < 0 || y >= spec_.sites) {
        return false;
      }
      to(0) = y;
      return true;
    }
    const int c = coordinate(j);
    const int v = new_value(j);
    if (from(c) == v) return false;
    to(c) = v;
    return true;
  }

  bool valid_from(const State& from, int j) const {
    State to;
    return apply(from, j, to);
  }

  /// Row-major flat index, coordinate 0 most significant.
  std::int64_t flat_index(const State& x) const {
    std::int64_t idx = 0;
    for (int i = 0; i < spec_.dims; ++i) idx = idx * spec_.sites + x(i);
    return idx;
  }

  State unflatten(std::int64_t idx) const {
    State x(spec_.dims);
    for (int i = spec_.dims - 1; i >= 0; --i) {
      x(i) = static_cast<int>(idx % spec_.sites);
      idx /= spec_.sites;
    }
    return x;
  }

 private:
  StateSpaceSpec spec_;
  int size_ = 0;
};

/// A distribution over S states.
template <typename Scalar = double>
class ProbabilityVector {
 public:
  ProbabilityVector() = default;

  /// Validates nonnegativity and unit mass within `tol`.
  explicit ProbabilityVector(Vector<Scalar> probs,
                             double tol = Tolerances::kNormalization)
      : probs_(std::move(probs)) {
    require(probs_.size() >= 1, ErrorKind::data, "probability vector is empty");
    for (Eigen::Index i = 0; i < probs_.size(); ++i)
      if (!(probs_(i) >= Scalar(0) && std::isfinite(double(probs_(i)))))
        fail(ErrorKind::data,
             "probability vector entry " + std::to_string(i) + " is negative or non-finite");
    const double drift = std::abs(double(probs_.sum()) - 1.0);
    if (!(drift <= tol))
      fail(ErrorKind::data,
           "probability vector does not sum to 1 (drift " + std::to_string(drift) + ")");
  }

  static ProbabilityVector uniform(Eigen::Index n) {
    return ProbabilityVector(Vector<Scalar>::Constant(n, Scalar(1) / Scalar(n)));
  }

  static ProbabilityVector point_mass(Eigen::Index n, Eigen::Index at) {
    Vector<Scalar> v = Vector<Scalar>::Zero(n);
    v(at) = Scalar(1);
    return ProbabilityVector(std::move(v));
  }

  /// Rescales nonnegative weights to unit mass.
  static ProbabilityVector normalized(const Vector<Scalar>& weights) {
    const Scalar total = weights.sum();
    require(total > Scalar(0) && std::isfinite(double(total)), ErrorKind::data,
            "cannot normalize weights with nonpositive total");
    return ProbabilityVector(weights / total);
  }

  const Vector<Scalar>& probs() const { return probs_; }
  Eigen::Index size() const { return probs_.size(); }
  Scalar operator()(Eigen::Index i) const { return probs_(i); }

 private:
  Vector<Scalar> probs_;
};

/// Generator matrix, columns are "from" states.
template <typename Scalar = double>
class RateMatrix {
 public:
  RateMatrix() = default;

  explicit RateMatrix(Matrix<Scalar> entries, double tol = Tolerances::kNormalization)
      : entries_(std::move(entries)) {
    require(entries_.rows() == entries_.cols() && entries_.rows() >= 1, ErrorKind::data,
            "rate matrix must be square and nonempty");
    const auto n = entries_.rows();
    for (Eigen::Index x = 0; x < n; ++x) {
      for (Eigen::Index y = 0; y < n; ++y) {
        require(std::isfinite(double(entries_(y, x))), ErrorKind::data,
                "rate matrix has a non-finite entry");
        if (y != x)
          require(entries_(y, x) >= Scalar(0), ErrorKind::data,
                  "rate matrix has a negative off-diagonal entry");
      }
      const double col = std::abs(double(entries_.col(x).sum()));
      if (!(col <= tol))
        fail(ErrorKind::data, "rate matrix column " + std::to_string(x) + " does not sum to zero");
    }
  }

  /// Builds a generator from off-diagonal rates; the diagonal is filled in.
  static RateMatrix from_off_diagonal(Matrix<Scalar> rates) {
    rates.diagonal().setZero();
    rates.diagonal() = -rates.colwise().sum().transpose();
    return RateMatrix(std::move(rates));
  }

  const Matrix<Scalar>& entries() const { return entries_; }
  Eigen::Index size() const { return entries_.rows(); }
  /// Rate of the jump x -> y (y != x).
  Scalar operator()(Eigen::Index y, Eigen::Index x) const { return entries_(y, x); }

 private:
  Matrix<Scalar> entries_;
};

/// s(x, y) = p(y) / p(x) for fixed base state x.
template <typename Scalar = double>
struct ScoreVector {
  Vector<Scalar> values;
  Eigen::Index base_state = 0;
};

/// Jump intensities out of a state, indexed by JumpSpace jump index.
template <typename Scalar = double>
class IntensityMap {
 public:
  IntensityMap() = default;
  explicit IntensityMap(int jumps) : rates_(Vector<Scalar>::Zero(jumps)) {}
  explicit IntensityMap(Vector<Scalar> rates) : rates_(std::move(rates)) {}

  const Vector<Scalar>& rates() const { return rates_; }
  Vector<Scalar>& rates() { return rates_; }
  Scalar operator()(int j) const { return rates_(j); }
  int size() const { return static_cast<int>(rates_.size()); }

  void reset(int jumps) {
    rates_.resize(jumps);
    rates_.setZero();
  }

  /// Checks the IntensityMap invariants relative to the state y.
  void validate(const JumpSpace& space, const State& y) const {
    require(size() == space.size(), ErrorKind::numerical, "intensity map has wrong size");
    for (int j = 0; j < size(); ++j) {
      require(rates_(j) >= Scalar(0) && std::isfinite(double(rates_(j))),
              ErrorKind::numerical, "intensity map entry is negative or non-finite");
      if (rates_(j) > Scalar(0))
        require(space.valid_from(y, j), ErrorKind::numerical,
                "intensity map assigns rate to a jump leaving the state space");
    }
  }

 private:
  Vector<Scalar> rates_;
};

using Intensity = IntensityMap<double>;

// ---------------------------------------------------------------------------
// Operations

/// Q = (1/S) E - I.
template <typename Scalar = double>
RateMatrix<Scalar> build_uniform_rate_matrix(int sites) {
  require(sites >= 2, ErrorKind::config, "uniform rate matrix: S must be >= 2");
  Matrix<Scalar> q = Matrix<Scalar>::Constant(sites, sites, Scalar(1) / Scalar(sites));
  q.diagonal().array() -= Scalar(1);
  return RateMatrix<Scalar>(std::move(q));
}

/// p_t = ((1 - e^-t)/S) E p0 + e^-t p0, valid only for Q = (1/S) E - I.
template <typename Scalar>
ProbabilityVector<Scalar> forward_marginal_closed(const ProbabilityVector<Scalar>& p0,
                                                  double t) {
  require(t >= 0.0, ErrorKind::domain, "forward marginal: t must be >= 0");
  const Scalar decay = Scalar(std::exp(-t));
  const Scalar floor = (Scalar(1) - decay) / Scalar(p0.size());
  Vector<Scalar> pt = (p0.probs().array() * decay + floor).matrix();
  return ProbabilityVector<Scalar>(std::move(pt));
}

/// p_t = exp(t Q) p0 for a homogeneous generator.
template <typename Scalar>
ProbabilityVector<Scalar> forward_marginal_general(const ProbabilityVector<Scalar>& p0,
                                                   const RateMatrix<Scalar>& q, double t,
                                                   const Tolerances& tol = {}) {
  require(t >= 0.0, ErrorKind::domain, "forward marginal: t must be >= 0");
  require(q.size() == p0.size(), ErrorKind::data, "forward marginal: size mismatch");
  if (t == 0.0) return p0;

  ExpmDiagnostics diag;
  const Matrix<Scalar> propagator = expm(q.entries() * Scalar(t), &diag);
  Vector<Scalar> pt = propagator * p0.probs();

  // Round-off may leave tiny negative entries or mass drift; anything beyond
  // the normalization tolerance is a real failure.
  for (Eigen::Index i = 0; i < pt.size(); ++i) {
    if (pt(i) < Scalar(0)) {
      if (double(-pt(i)) > tol.normalization) {
        std::ostringstream msg;
        msg << "forward marginal: negative mass " << double(pt(i)) << " at state " << i
            << " (squarings=" << diag.squarings << ", terms=" << diag.terms << ")";
        fail(ErrorKind::numerical, msg.str());
      }
      pt(i) = Scalar(0);
    }
  }
  const double drift = std::abs(double(pt.sum()) - 1.0);
  if (drift > tol.normalization) {
    std::ostringstream msg;
    msg << "forward marginal: mass drift " << drift << " exceeds tolerance"
        << " (squarings=" << diag.squarings << ", terms=" << diag.terms << ")";
    fail(ErrorKind::numerical, msg.str());
  }
  pt /= pt.sum();
  return ProbabilityVector<Scalar>(std::move(pt), tol.normalization);
}

template <typename Scalar>
ScoreVector<Scalar> score(const ProbabilityVector<Scalar>& pt, Eigen::Index x) {
  require(x >= 0 && x < pt.size(), ErrorKind::domain, "score: base state out of range");
  if (!(pt(x) > Scalar(0)))
    fail(ErrorKind::singular, "score: state " + std::to_string(x) + " has zero mass (unreachable)");
  ScoreVector<Scalar> s{pt.probs() / pt(x), x};
  s.values(x) = Scalar(1);
  return s;
}

/// Reverse-process intensities out of y:
///   rate(nu) = score(y -> y + nu) * Q(y, y + nu),
/// where Q(y, y + nu) is the forward rate from y + nu back to y.
/// States are addressed through the JumpSpace flat index, so the matrix and
/// score live on the full (flattened) state space.
template <typename Scalar>
IntensityMap<Scalar> backward_intensity(const StateSpaceSpec& spec,
                                        const RateMatrix<Scalar>& q_reversed,
                                        const ScoreVector<Scalar>& score_at_state,
                                        const State& y) {
  const JumpSpace space(spec);
  require(q_reversed.size() == spec.cardinality(), ErrorKind::data,
          "backward intensity: rate matrix does not match the state space");
  require(score_at_state.values.size() == q_reversed.size(), ErrorKind::data,
          "backward intensity: score does not match the state space");
  const auto from = space.flat_index(y);
  require(score_at_state.base_state == from, ErrorKind::data,
          "backward intensity: score base state differs from y");

  IntensityMap<Scalar> out(space.size());
  State target;
  for (int j = 0; j < space.size(); ++j) {
    if (!space.apply(y, j, target)) continue;
    const auto to = space.flat_index(target);
    const Scalar forward_rate = q_reversed(from, to);
    if (forward_rate == Scalar(0)) continue;
    const Scalar s = score_at_state.values(to);
    require(std::isfinite(double(s)), ErrorKind::singular,
            "backward intensity: infinite score on a permissible jump");
    out.rates()(j) = s * forward_rate;
  }
  return out;
}

template <typename Scalar>
Scalar total_intensity(const IntensityMap<Scalar>& m) {
  return m.size() == 0 ? Scalar(0) : m.rates().sum();
}

}  // namespace ddiff
