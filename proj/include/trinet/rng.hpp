#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

namespace trinet {

/// SplitMix64 generator.
///
/// state += 0x9E3779B97F4A7C15, then the output is mixed with
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   z =  z ^ (z >> 31)
/// Floats take the top 24 bits, doubles the top 53 bits. Integer ranges use
/// rejection sampling on the raw 64-bit output, so every platform reproduces
/// the same sequence for the same seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// [0, 1) with 24-bit resolution.
  float next_float() noexcept;
  /// [0, 1) with 53-bit resolution.
  double next_double() noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Uniform real in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  /// Independent child stream. Does not advance this generator.
  Rng fork(std::uint64_t key) const noexcept;

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

/// One mixing round of SplitMix64 applied to `x`.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Per-module seed derivation: global seed XOR a fixed module constant.
namespace seed_domain {
inline constexpr std::uint64_t sampler = 0x5A4D504C45520001ULL;
inline constexpr std::uint64_t backbone = 0x4241434B424E0002ULL;
inline constexpr std::uint64_t provider = 0x50524F5649440003ULL;
inline constexpr std::uint64_t wavelet = 0x5754435250410004ULL;
inline constexpr std::uint64_t fusion = 0x4655534E48440005ULL;
inline constexpr std::uint64_t synth = 0x53594E5448470006ULL;
inline constexpr std::uint64_t eval = 0x4556414C4B490007ULL;
inline constexpr std::uint64_t probe = 0x50524F4245000008ULL;
}  // namespace seed_domain

inline std::uint64_t derive_seed(std::uint64_t global, std::uint64_t domain) noexcept {
  return global ^ domain;
}

}  // namespace trinet
