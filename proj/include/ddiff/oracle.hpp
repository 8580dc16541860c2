#pragma once

#include <cstdint>
#include <functional>
#include <utility>

#include "ddiff/ctmc.hpp"
#include "ddiff/random.hpp"

namespace ddiff {

/// Estimated reverse-process intensity mu_s(., y) as a function of reverse
/// time s and the current state y.
class IntensityOracle {
 public:
  virtual ~IntensityOracle() = default;

  virtual const JumpSpace& jumps() const = 0;

  /// Writes mu_s(., y) into `out`, resizing it to jumps().size().
  /// Must be safe to call concurrently.
  virtual void evaluate(double s, const State& y, Intensity& out) const = 0;

  /// Upper bound on the total intensity over all states and s in [s_lo, s_hi].
  virtual double intensity_bound(double s_lo, double s_hi) const = 0;

  Intensity operator()(double s, const State& y) const {
    Intensity out;
    evaluate(s, y, out);
    return out;
  }
};

/// An oracle plus the initial distribution q_0 of the reverse process.
class DiffusionModel : public IntensityOracle {
 public:
  /// Reverse-time horizon T; grids run over [0, T - delta].
  virtual double horizon() const = 0;

  virtual State initial_state(RandomStream& rng) const = 0;

  /// Post-processing applied after the last step (e.g. filling residual
  /// masks). Default: identity.
  virtual void finalize(State& /*y*/, RandomStream& /*rng*/) const {}

  /// Index of a finished sample in [0, support_size()).
  virtual std::int64_t sample_index(const State& y) const { return jumps().flat_index(y); }

  virtual std::int64_t support_size() const { return jumps().spec().cardinality(); }
};

/// Adapts a callable into an IntensityOracle.
class FunctionOracle : public IntensityOracle {
 public:
  using Fn = std::function<void(double, const State&, Intensity&)>;

  FunctionOracle(StateSpaceSpec spec, Fn fn, double bound)
      : space_(spec), fn_(std::move(fn)), bound_(bound) {}

  const JumpSpace& jumps() const override { return space_; }

  void evaluate(double s, const State& y, Intensity& out) const override {
    out.reset(space_.size());
    fn_(s, y, out);
  }

  double intensity_bound(double, double) const override { return bound_; }

 private:
  JumpSpace space_;
  Fn fn_;
  double bound_;
};

}  // namespace ddiff
