#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace memtest {

/// 64-bit finalizer from SplitMix64; used to derive independent stream keys.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seeded randomness source. A (seed, stream) pair fully determines the
/// sequence, so trial t of a simulation can be regenerated without replaying
/// trials 0..t-1. Uniform variates are derived from raw engine bits rather than
/// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();
  /// Uniform on (0, 1]; safe to take the log of.
  double uniform_open01();
  /// Uniform integer in [0, bound), bound > 0.
  std::uint64_t below(std::uint64_t bound);
  double normal();

  /// Child stream keyed by `index`; does not advance this generator.
  Rng fork(std::uint64_t index) const { return Rng(seed_, splitmix64(stream_ ^ (index + 1))); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace memtest
