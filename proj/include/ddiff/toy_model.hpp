#pragma once

#include "ddiff/ctmc.hpp"
#include "ddiff/oracle.hpp"

namespace ddiff {

/// Single-coordinate uniform-state diffusion: forward generator
/// Q = (1/S) E - I on S states, target p0, horizon T, and the exact
/// reverse intensity
///   mu_s(nu, y) = (1/S) p_{T-s}(y + nu) / p_{T-s}(y),
/// with p_t available in closed form. The reverse process starts from the
/// uniform distribution.
class UniformToyModel : public DiffusionModel {
 public:
  UniformToyModel(ProbabilityVector<double> target, double horizon);

  const JumpSpace& jumps() const override { return space_; }
  void evaluate(double s, const State& y, Intensity& out) const override;
  double intensity_bound(double s_lo, double s_hi) const override;

  double horizon() const override { return horizon_; }
  State initial_state(RandomStream& rng) const override;

  int sites() const { return space_.spec().sites; }
  const ProbabilityVector<double>& target() const { return target_; }

  /// Forward marginal p_t.
  ProbabilityVector<double> marginal(double t) const;

 private:
  ProbabilityVector<double> target_;
  double horizon_;
  JumpSpace space_;
};

}  // namespace ddiff
