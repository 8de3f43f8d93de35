#pragma once

#include <cstdint>
#include <limits>

namespace aesmc {

/// Seeded pseudo-random generator used for every stochastic operation.
///
/// xoshiro256** with its state filled from a SplitMix64 stream. Seeding costs a
/// handful of integer operations, which matters because every replicate and
/// every sweep derives its own generator. Uniforms and normals use explicit
/// formulas so streams do not depend on the standard library implementation.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  /// Generator for replicate `index` of a run seeded with `master`:
  /// Rng(mix(mix(master) ^ mix(index ^ 0xD1B54A32D192ED03))) with the
  /// SplitMix64 finalizer as mix.
  static Rng derive(std::uint64_t master, std::uint64_t index);

  std::uint64_t next_u64();
  result_type operator()() { return next_u64(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via the Box-Muller transform (two uniforms per draw).
  double normal();

  /// Child generator seeded from the next output of this one.
  Rng split() { return Rng(next_u64()); }

 private:
  std::uint64_t s_[4];
};

}  // namespace aesmc
