#pragma once

// Seeded, platform-independent random streams.
//
// std::mt19937_64 has a bit-exact definition in the standard, but the
// <random> distributions do not, so the conversions to real values live here.
//
// Stream splitting: a child stream is seeded with mix(parent ^ mix(tag + 1)),
// where mix is the SplitMix64 finalizer. Layers derive their seed as
// base_seed ^ fnv1a64(layer_name); prune stage t uses derive_seed(layer, t).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace weightpress {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept {
  return splitmix64(parent ^ splitmix64(tag + 1));
}

inline constexpr std::uint64_t layer_seed(std::uint64_t base, std::string_view layer) noexcept {
  return base ^ fnv1a64(layer);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Reject the low 2^64 mod n values so the modulo is unbiased.
    const std::uint64_t limit = n == 0 ? 0 : (0 - n) % n;
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= limit) return x % n;
    }
  }

  /// Standard normal via Box-Muller; one value per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace weightpress
