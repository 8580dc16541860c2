#include "ddiff/masked.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "ddiff/error.hpp"

namespace ddiff {

namespace {

void check_schedule(const NoiseSchedule& sched) {
  require(sched.eps > 0.0 && sched.eps < 1.0, ErrorKind::config,
          "noise schedule: eps must lie in (0, 1)");
}

std::int64_t ipow(std::int64_t base, int exp) {
  std::int64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

double schedule_sigma(const NoiseSchedule& sched, double t) {
  check_schedule(sched);
  require(t >= 0.0 && t <= 1.0, ErrorKind::domain, "sigma: t must lie in [0, 1]");
  return (1.0 - sched.eps) / (1.0 - (1.0 - sched.eps) * t);
}

double schedule_sigma_bar(const NoiseSchedule& sched, double t) {
  check_schedule(sched);
  require(t >= 0.0 && t <= 1.0, ErrorKind::domain, "sigma_bar: t must lie in [0, 1]");
  return -std::log1p(-(1.0 - sched.eps) * t);
}

double masked_score_prefactor(const NoiseSchedule& sched, double t) {
  require(t > 0.0, ErrorKind::singular,
          "masked score prefactor is singular at t = 0 (use an early stop delta > 0)");
  const double sb = schedule_sigma_bar(sched, t);
  // e^{-sb} / (1 - e^{-sb}) = 1 / expm1(sb)
  return 1.0 / std::expm1(sb);
}

TokenSequence all_mask(int dims, int vocab) {
  TokenSequence seq(dims);
  seq.setConstant(vocab);
  return seq;
}

// ---------------------------------------------------------------------------
// TargetTable

TargetTable::TargetTable(int dims, int vocab, Vector<double> probs)
    : dims_(dims), vocab_(vocab), probs_(std::move(probs)) {
  require(dims >= 1 && dims <= kMaxDims, ErrorKind::config, "target table: invalid dims");
  require(vocab >= 2, ErrorKind::config, "target table: vocab must be >= 2");
  double n = 1.0;
  for (int i = 0; i < dims; ++i) n *= vocab;
  require(n <= double(kMaxEntries), ErrorKind::config,
          "target table: S^d exceeds the enumerability bound of 1e6");
  require(probs_.size() == ipow(vocab, dims), ErrorKind::data,
          "target table: entry count differs from S^d");
  ProbabilityVector<double> check(probs_);  // validates
  (void)check;
}

TargetTable TargetTable::random(int dims, int vocab, std::uint64_t seed) {
  RandomStream rng(seed);
  Vector<double> w(ipow(vocab, dims));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.exponential();
  return TargetTable(dims, vocab, w / w.sum());
}

TargetTable TargetTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open target table '" + path.string() + "'");

  int dims = -1, vocab = -1;
  Vector<double> probs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (dims < 0) {
      std::string k1, k2;
      row >> k1 >> dims >> k2 >> vocab;
      require(row && k1 == "dims" && k2 == "vocab", ErrorKind::data,
              where + ": expected header 'dims <d> vocab <S>'");
      require(dims >= 1 && dims <= kMaxDims && vocab >= 2, ErrorKind::data,
              where + ": invalid dims/vocab");
      require(ipow(vocab, dims) <= kMaxEntries, ErrorKind::data,
              where + ": S^d exceeds the enumerability bound");
      probs = Vector<double>::Zero(ipow(vocab, dims));
      continue;
    }
    std::int64_t idx = -1;
    double p = -1.0;
    row >> idx >> p;
    require(static_cast<bool>(row), ErrorKind::data, where + ": expected '<index> <probability>'");
    require(idx >= 0 && idx < probs.size(), ErrorKind::data, where + ": index out of range");
    require(p >= 0.0 && std::isfinite(p), ErrorKind::data, where + ": invalid probability");
    probs(idx) = p;
  }
  require(dims >= 1, ErrorKind::data, path.string() + ": missing header");
  const double total = probs.sum();
  require(std::abs(total - 1.0) <= 1e-9, ErrorKind::data,
          path.string() + ": probabilities sum to " + std::to_string(total) + ", not 1");
  return TargetTable(dims, vocab, probs / total);
}

void TargetTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write target table '" + path.string() + "'");
  out << "# target table, flat index row-major (position 0 most significant)\n";
  out << "dims " << dims_ << " vocab " << vocab_ << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < probs_.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", probs_(i));
    out << i << ' ' << buf << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "failed writing target table '" + path.string() + "'");
}

std::int64_t TargetTable::index(const TokenSequence& full) const {
  require(full.size() == dims_, ErrorKind::data, "target table: sequence length mismatch");
  std::int64_t idx = 0;
  for (int i = 0; i < dims_; ++i) {
    require(full(i) >= 0 && full(i) < vocab_, ErrorKind::data,
            "target table: sequence contains a mask or out-of-vocabulary token");
    idx = idx * vocab_ + full(i);
  }
  return idx;
}

TokenSequence TargetTable::sequence(std::int64_t index) const {
  TokenSequence seq(dims_);
  for (int i = dims_ - 1; i >= 0; --i) {
    seq(i) = static_cast<int>(index % vocab_);
    index /= vocab_;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// ConditionalOracle

namespace {
constexpr double kMaxTabulatedDoubles = 4e6;
}

ConditionalOracle::ConditionalOracle(std::shared_ptr<const TargetTable> table)
    : table_(std::move(table)) {
  require(table_ != nullptr, ErrorKind::config, "conditional oracle: null table");
  const int d = table_->dims();
  const int vocab = table_->vocab();
  const std::int64_t contexts = ipow(vocab + 1, d);
  if (double(contexts) * d * vocab > kMaxTabulatedDoubles) return;

  // Every full sequence x contributes p(x) to each of its 2^d mask patterns.
  cond_.assign(static_cast<std::size_t>(contexts * d * vocab), 0.0);
  mass_.assign(static_cast<std::size_t>(contexts), 0.0);
  const auto& probs = table_->probs();
  for (std::int64_t x = 0; x < table_->entries(); ++x) {
    const double w = probs(x);
    if (w == 0.0) continue;
    const TokenSequence full = table_->sequence(x);
    for (std::uint32_t pattern = 0; pattern < (1u << d); ++pattern) {
      TokenSequence ctx = full;
      for (int l = 0; l < d; ++l)
        if (pattern & (1u << l)) ctx(l) = vocab;
      const std::int64_t c = context_index(ctx);
      mass_[c] += w;
      for (int l = 0; l < d; ++l)
        if (pattern & (1u << l)) cond_[(c * d + l) * vocab + full(l)] += w;
    }
  }
  for (std::int64_t c = 0; c < contexts; ++c) {
    if (mass_[c] <= 0.0) continue;
    double* rows = &cond_[c * d * vocab];
    for (int k = 0; k < d * vocab; ++k) rows[k] /= mass_[c];
  }
  tabulated_ = true;
}

std::int64_t ConditionalOracle::context_index(const TokenSequence& seq) const {
  const int vocab = table_->vocab();
  std::int64_t idx = 0;
  for (int i = 0; i < table_->dims(); ++i) idx = idx * (vocab + 1) + seq(i);
  return idx;
}

void ConditionalOracle::enumerate(const TokenSequence& seq, double* cond, double& mass) const {
  const int d = table_->dims();
  const int vocab = table_->vocab();
  std::fill(cond, cond + d * vocab, 0.0);
  mass = 0.0;

  int masked[kMaxDims];
  int k = 0;
  for (int l = 0; l < d; ++l)
    if (seq(l) == vocab) masked[k++] = l;

  TokenSequence full = seq;
  for (int i = 0; i < k; ++i) full(masked[i]) = 0;
  const std::int64_t completions = ipow(vocab, k);
  const auto& probs = table_->probs();
  for (std::int64_t c = 0; c < completions; ++c) {
    std::int64_t rest = c;
    for (int i = k - 1; i >= 0; --i) {
      full(masked[i]) = static_cast<int>(rest % vocab);
      rest /= vocab;
    }
    const double w = probs(table_->index(full));
    if (w == 0.0) continue;
    mass += w;
    for (int i = 0; i < k; ++i) cond[masked[i] * vocab + full(masked[i])] += w;
  }
  if (mass > 0.0)
    for (int i = 0; i < k; ++i)
      for (int v = 0; v < vocab; ++v) cond[masked[i] * vocab + v] /= mass;
}

void ConditionalOracle::conditional_row(const TokenSequence& seq, int pos, double* out) const {
  const int d = table_->dims();
  const int vocab = table_->vocab();
  require(seq.size() == d, ErrorKind::data, "conditional oracle: sequence length mismatch");
  require(pos >= 0 && pos < d, ErrorKind::domain, "conditional oracle: position out of range");
  for (int l = 0; l < d; ++l)
    require(seq(l) >= 0 && seq(l) <= vocab, ErrorKind::data, "conditional oracle: invalid token");

  if (seq(pos) != vocab) {
    std::fill(out, out + vocab, 0.0);
    out[seq(pos)] = 1.0;
    return;
  }
  double mass = 0.0;
  const double* row = nullptr;
  std::vector<double> scratch;
  if (tabulated_) {
    const std::int64_t c = context_index(seq);
    mass = mass_[c];
    row = &cond_[(c * d + pos) * vocab];
  } else {
    scratch.resize(static_cast<std::size_t>(d * vocab));
    enumerate(seq, scratch.data(), mass);
    row = &scratch[pos * vocab];
  }
  require(mass > 0.0, ErrorKind::singular,
          "conditional oracle: unmasked context has zero mass under the target (unreachable)");
  std::copy(row, row + vocab, out);
}

Matrix<double> ConditionalOracle::conditional_probs(const TokenSequence& seq) const {
  const int d = table_->dims();
  const int vocab = table_->vocab();
  Matrix<double> out(d, vocab);
  std::vector<double> row(vocab);
  for (int l = 0; l < d; ++l) {
    conditional_row(seq, l, row.data());
    for (int v = 0; v < vocab; ++v) out(l, v) = row[v];
  }
  return out;
}

Matrix<double> conditional_probs(const ConditionalOracle& oracle, const TokenSequence& seq) {
  return oracle.conditional_probs(seq);
}

Matrix<double> masked_score(const ConditionalOracle& oracle, const NoiseSchedule& sched,
                            const TokenSequence& seq, double t) {
  return masked_score_prefactor(sched, t) * oracle.conditional_probs(seq);
}

TokenSequence forward_mask_sample(const TokenSequence& seq0, const NoiseSchedule& sched, double t,
                                  int vocab, RandomStream& rng) {
  for (int l = 0; l < seq0.size(); ++l)
    require(seq0(l) >= 0 && seq0(l) < vocab, ErrorKind::data,
            "forward mask: initial sequence must be fully unmasked");
  const double p_mask = -std::expm1(-schedule_sigma_bar(sched, t));
  TokenSequence out = seq0;
  for (int l = 0; l < out.size(); ++l)
    if (rng.uniform() < p_mask) out(l) = vocab;
  return out;
}

// ---------------------------------------------------------------------------
// MaskedModel

MaskedModel::MaskedModel(std::shared_ptr<const TargetTable> table, NoiseSchedule sched)
    : oracle_(std::move(table)),
      sched_(sched),
      space_(StateSpaceSpec{oracle_.table().dims(), oracle_.table().vocab() + 1, Topology::bounded}) {
  check_schedule(sched_);
}

void MaskedModel::evaluate(double s, const State& y, Intensity& out) const {
  const int d = dims();
  const int vocab = this->vocab();
  const int sites = vocab + 1;
  out.reset(space_.size());
  const double t = 1.0 - s;
  require(t > 0.0, ErrorKind::singular, "masked model: reverse time reached the data end (t = 0)");
  // Forward rate of the token -> MASK jump that the reverse jump undoes.
  const double forward_rate = schedule_sigma(sched_, t);
  const double prefactor = masked_score_prefactor(sched_, t);
  auto& rates = out.rates();
  double row[64];
  std::vector<double> big;
  double* buf = row;
  if (vocab > 64) {
    big.resize(vocab);
    buf = big.data();
  }
  for (int l = 0; l < d; ++l) {
    if (y(l) != vocab) continue;
    oracle_.conditional_row(y, l, buf);
    for (int v = 0; v < vocab; ++v) rates(l * sites + v) = forward_rate * prefactor * buf[v];
  }
}

double MaskedModel::intensity_bound(double s_lo, double s_hi) const {
  // Per masked position the total is sigma(t) * prefactor(t), which is
  // decreasing in t; the window maximum is at the smallest t = 1 - s_hi.
  double bound = 0.0;
  for (double s : {s_lo, s_hi}) {
    const double t = 1.0 - s;
    if (t <= 0.0) return std::numeric_limits<double>::infinity();
    bound = std::max(bound, schedule_sigma(sched_, t) * masked_score_prefactor(sched_, t));
  }
  return dims() * bound * (1.0 + 1e-12);
}

State MaskedModel::initial_state(RandomStream&) const { return all_mask(dims(), vocab()); }

void MaskedModel::finalize(State& y, RandomStream& rng) const {
  const int vocab = this->vocab();
  std::vector<double> row(vocab);
  for (int l = 0; l < dims(); ++l) {
    if (y(l) != vocab) continue;
    oracle_.conditional_row(y, l, row.data());
    const double u = rng.uniform();
    double cum = 0.0;
    int pick = -1;
    for (int v = 0; v < vocab; ++v) {
      if (row[v] <= 0.0) continue;
      cum += row[v];
      pick = v;
      if (u < cum) break;
    }
    y(l) = pick;
  }
}

std::int64_t MaskedModel::sample_index(const State& y) const { return oracle_.table().index(y); }

}  // namespace ddiff
