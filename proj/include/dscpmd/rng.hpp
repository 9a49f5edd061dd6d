#pragma once

#include <cmath>
#include <cstdint>

namespace dscpmd {

// SplitMix64 step; used both as a seed expander and as a stateless hash for
// counter-based noise streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b * 0x9e3779b97f4a7c15ULL);
  return splitmix64(s);
}

inline double u64_to_unit(std::uint64_t x) {
  // [0, 1) with 53 significant bits.
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// xoshiro256** 1.0 (Blackman & Vigna), seeded through SplitMix64.
// Identifier recorded in reports: "xoshiro256starstar".
class Xoshiro256StarStar {
 public:
  explicit Xoshiro256StarStar(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  std::uint64_t next() {
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

  // Unbiased integer in [0, n) via Lemire's method with rejection.
  std::uint64_t bounded(std::uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(next()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0ULL - n) % n;
      while (lo < threshold) {
        m = static_cast<__uint128_t>(next()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double uniform() { return u64_to_unit(next()); }

  static constexpr const char* kName = "xoshiro256starstar";

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Stateless standard-normal draw addressed by (seed, stream, counter).
// Thread-count independent by construction: every call derives its value
// from the key alone (Box-Muller on two hashed uniforms).
inline double counter_gaussian(std::uint64_t seed, std::uint64_t stream,
                               std::uint64_t counter) {
  const std::uint64_t k = mix64(seed, stream);
  const std::uint64_t a = mix64(k, 2 * counter);
  const std::uint64_t b = mix64(k, 2 * counter + 1);
  // (0, 1] so log() stays finite.
  const double u1 =
      (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = u64_to_unit(b);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace dscpmd
