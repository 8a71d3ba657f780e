#pragma once

#include <cmath>
#include <cstdint>

namespace dsde {

// SplitMix64 output mixer (Steele, Lea & Flood 2014). State advances by the
// 64-bit golden ratio, so the i-th output from initial state s is
// mix(s + (i+1)*GAMMA) and can be computed in constant time.
namespace detail {

inline constexpr std::uint64_t kSplitMixGamma = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix64_at(std::uint64_t seed, std::uint64_t index) {
  return splitmix64_mix(seed + (index + 1) * kSplitMixGamma);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

// xoshiro256++ (Blackman & Vigna 2019) seeded via SplitMix64, per the
// reference recommendation. Fully specified: identical seeds give identical
// streams on every platform. Uniform doubles take the top 53 bits, so no
// implementation-defined <random> distribution is involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) {
      sm += detail::kSplitMixGamma;
      word = detail::splitmix64_mix(sm);
    }
  }

  // Independent stream `index` of a master seed. Stream seeds are distinct
  // SplitMix64 outputs, so streams never share xoshiro initial states.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(detail::splitmix64_at(seed, index));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second deviate is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Beta(a, 1) via inverse CDF: U^(1/a), CDF F(x) = x^a on [0, 1].
  double beta_a1(double a) { return std::pow(uniform(), 1.0 / a); }

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dsde
