#pragma once

// Masked (absorbing-state) discrete diffusion at enumerable scale.
//
// Tokens take values 0..S-1; MASK is encoded as the extra value S, so a
// sequence of length d lives in the factorized space [S+1]^d. Forward time t
// runs over [0, 1]; reverse time is s = 1 - t.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "ddiff/ctmc.hpp"
#include "ddiff/oracle.hpp"
#include "ddiff/random.hpp"

namespace ddiff {

inline constexpr double kDefaultMaskEps = 1e-3;
inline constexpr double kDefaultMaskDelta = 1e-3;

/// Log-linear schedule: sigma(t) = (1-eps) / (1 - (1-eps) t),
/// sigma_bar(t) = -log(1 - (1-eps) t).
struct NoiseSchedule {
  double eps = kDefaultMaskEps;
};

double schedule_sigma(const NoiseSchedule& sched, double t);
double schedule_sigma_bar(const NoiseSchedule& sched, double t);

/// e^{-sigma_bar(t)} / (1 - e^{-sigma_bar(t)}); singular at t = 0.
double masked_score_prefactor(const NoiseSchedule& sched, double t);

using TokenSequence = State;

inline bool is_mask(const TokenSequence& seq, int pos, int vocab) { return seq(pos) == vocab; }

TokenSequence all_mask(int dims, int vocab);

/// Explicit joint distribution over [S]^d, flat index row-major.
class TargetTable {
 public:
  static constexpr std::int64_t kMaxEntries = 1'000'000;

  TargetTable(int dims, int vocab, Vector<double> probs);

  /// Dirichlet(1, ..., 1) draw (normalized exponentials).
  static TargetTable random(int dims, int vocab, std::uint64_t seed);

  /// Plain-text format:
  ///   # comment lines
  ///   dims <d> vocab <S>
  ///   <flat index> <probability>     (one row per entry; omitted rows are 0)
  /// Totals within 1e-9 of 1 are renormalized, anything else is rejected.
  static TargetTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int dims() const { return dims_; }
  int vocab() const { return vocab_; }
  std::int64_t entries() const { return probs_.size(); }
  const Vector<double>& probs() const { return probs_; }
  ProbabilityVector<double> distribution() const { return ProbabilityVector<double>(probs_); }

  std::int64_t index(const TokenSequence& full) const;
  TokenSequence sequence(std::int64_t index) const;

 private:
  int dims_;
  int vocab_;
  Vector<double> probs_;
};

/// Exact conditionals P(x^l = v | unmasked portion) by enumeration of the
/// target table. Read-only after construction; small tables are fully
/// tabulated up front.
class ConditionalOracle {
 public:
  explicit ConditionalOracle(std::shared_ptr<const TargetTable> table);

  const TargetTable& table() const { return *table_; }

  /// d x S matrix: one-hot rows for unmasked positions, conditional
  /// distributions for masked ones. Throws ErrorKind::singular when the
  /// unmasked portion has zero mass.
  Matrix<double> conditional_probs(const TokenSequence& seq) const;

  /// Row `pos` of conditional_probs, written to out (size S).
  void conditional_row(const TokenSequence& seq, int pos, double* out) const;

 private:
  void enumerate(const TokenSequence& seq, double* cond, double& mass) const;
  std::int64_t context_index(const TokenSequence& seq) const;

  std::shared_ptr<const TargetTable> table_;
  bool tabulated_ = false;
  std::vector<double> cond_;   // per context: d * S conditionals
  std::vector<double> mass_;   // per context: mass of the unmasked portion
};

/// Independently masks each token with probability 1 - e^{-sigma_bar(t)}.
TokenSequence forward_mask_sample(const TokenSequence& seq0, const NoiseSchedule& sched, double t,
                                  int vocab, RandomStream& rng);

Matrix<double> conditional_probs(const ConditionalOracle& oracle, const TokenSequence& seq);

/// Prefactor times the conditional matrix.
Matrix<double> masked_score(const ConditionalOracle& oracle, const NoiseSchedule& sched,
                            const TokenSequence& seq, double t);

/// Reverse process of the masked diffusion driven by the exact conditional
/// oracle. Only MASK -> token jumps carry rate:
///   mu_s((l, v), y) = sigma(t) * prefactor(t) * P(x^l = v | y_unmasked),  t = 1 - s,
/// i.e. the forward token -> MASK rate times the score ratio.
/// Starts from the all-MASK sequence; residual masks after the last step
/// are filled by exact sequential sampling from the conditionals.
class MaskedModel : public DiffusionModel {
 public:
  MaskedModel(std::shared_ptr<const TargetTable> table, NoiseSchedule sched);

  const JumpSpace& jumps() const override { return space_; }
  void evaluate(double s, const State& y, Intensity& out) const override;
  double intensity_bound(double s_lo, double s_hi) const override;

  double horizon() const override { return 1.0; }
  State initial_state(RandomStream& rng) const override;
  void finalize(State& y, RandomStream& rng) const override;
  std::int64_t sample_index(const State& y) const override;
  std::int64_t support_size() const override { return oracle_.table().entries(); }

  const ConditionalOracle& oracle() const { return oracle_; }
  const NoiseSchedule& schedule() const { return sched_; }
  int vocab() const { return oracle_.table().vocab(); }
  int dims() const { return oracle_.table().dims(); }

 private:
  ConditionalOracle oracle_;
  NoiseSchedule sched_;
  JumpSpace space_;
};

}  // namespace ddiff
