// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_NUMCORE_RNG_HPP_
#define REPLAYGATE_NUMCORE_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace replaygate::nc {

/// Seeded random stream. The integer engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard; every derived draw is computed here
/// rather than through <random> distributions, whose algorithms vary by vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::size_t uniform_index(std::size_t n);
  /// Standard normal via Box-Muller; one draw consumes two uniforms.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Index drawn proportionally to nonnegative `weights`.
  std::size_t categorical(std::span<const double> weights);

  /// An independent child stream; the same (seed, stream) always yields the same child.
  Rng split(std::uint64_t stream) const;
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

/// splitmix64 finalizer, used for seed derivation.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace replaygate::nc

#endif  // REPLAYGATE_NUMCORE_RNG_HPP_
