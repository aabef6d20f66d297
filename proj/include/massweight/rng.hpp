#pragma once

#include <cstdint>

namespace massweight {

/// Counter-based 64-bit generator (SplitMix64 finalizer over an additive
/// counter). Streams are cheap to derive and independent of execution
/// order, which is what makes parallel replication reproducible.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform double in [0,1) on the 53-bit grid k * 2^-53.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Stream derivation: the generator for (seed, stream) starts from
/// mix(seed) ^ mix((stream + 1) * 0x9E3779B97F4A7C15). Replicate r of a
/// run seeded with s always uses stream_rng(s, r), regardless of how the
/// replicates are distributed over threads.
inline SplitMix64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t s =
      SplitMix64::mix(seed) ^ SplitMix64::mix((stream + 1) * 0x9E3779B97F4A7C15ULL);
  return SplitMix64(s);
}

}  // namespace massweight
