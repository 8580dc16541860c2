#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace ddiff {

/// SplitMix64 finalizer; used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic keyed random stream (xoshiro256** seeded from a 64-bit key).
///
/// `split(tag)` derives a child stream from the key alone, without consuming
/// any output, so a stream identified by (seed, trajectory, interval, stage)
/// is reproducible regardless of evaluation order or thread assignment.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t key = 0) : key_(key) {
    std::uint64_t z = key;
    for (auto& w : s_) {
      z = mix64(z);
      w = z;
    }
  }

  RandomStream split(std::uint64_t tag) const {
    return RandomStream(mix64(key_ ^ mix64(tag + 0x632be59bd9b4e019ULL)));
  }

  std::uint64_t key() const { return key_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Exponential with unit rate.
  double exponential() { return -std::log1p(-uniform()); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t key_;
  std::uint64_t s_[4];
};

/// Poisson draw with the given mean. Small means use inversion from a single
/// uniform; large means defer to the standard library.
inline std::int64_t poisson(RandomStream& rng, double mean) {
  if (mean <= 0.0) return 0;
  if (mean > 30.0) {
    std::poisson_distribution<std::int64_t> dist(mean);
    return dist(rng);
  }
  const double u = rng.uniform();
  double p = std::exp(-mean);
  double cdf = p;
  std::int64_t k = 0;
  while (u >= cdf && k < 1000) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

}  // namespace ddiff
