#pragma once

// Platform-independent pseudo-random streams.
//
// Every stream is an MT19937-64 engine (output fixed by the C++ standard)
// seeded with a SplitMix64 hash of (seed, stream tag, index). Only the raw
// 64-bit engine output is used; conversions to real numbers are done here
// with plain integer arithmetic so results match across platforms and
// standard libraries.

#include <cstdint>
#include <random>

namespace attntrack {

/// One SplitMix64 step: advances `state` and returns the mixed output.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Combines a seed with a stream tag and index into one engine seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                    std::uint64_t index) noexcept {
  std::uint64_t state = seed;
  std::uint64_t out = splitmix64(state);
  state ^= tag * 0xd6e8feb86659fd93ULL;
  out ^= splitmix64(state);
  state ^= index * 0xa0761d6478bd642fULL;
  out ^= splitmix64(state);
  return out;
}

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index)
      : engine_(derive_seed(seed, tag, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace attntrack
