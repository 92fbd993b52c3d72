#pragma once

#include <cstdint>

namespace part {

/// Counter-based 64-bit generator.
///
/// Output k of a generator with key K is splitmix64(K + (k + 1) * 0x9E3779B97F4A7C15),
/// i.e. the splitmix64 stream seeded with K. Because the state is just (key, counter),
/// a generator can be split into independent child streams by hashing the key with a
/// stream id, and every draw is reproducible on any platform. All derived
/// distributions below are implemented here rather than via <random>, whose
/// distributions are implementation-defined.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed) : key_(mix(seed)) {}
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t next_u64();

  /// Uniform integer in [lo, hi] (inclusive), unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Uniform index in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (one value per call; the pair's sibling is discarded).
  double normal();
  /// Normal(0, std) truncated to [-2 std, 2 std] by resampling.
  double truncated_normal(double std);

  /// Independent child stream; does not advance this generator.
  [[nodiscard]] Rng split(std::uint64_t stream) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace part
