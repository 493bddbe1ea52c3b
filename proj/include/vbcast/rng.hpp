#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace vbcast {

/// SplitMix64 step; used to expand a master seed into independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of stream `stream` under `master`. Distinct streams are decorrelated by hashing both.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  std::uint64_t t = stream ^ a;
  return splitmix64(t);
}

// xoshiro256** with 32 bytes of state, small enough for one stream per station.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0x5eedULL) noexcept {
    std::uint64_t s = seed;
    for (auto& w : s_) w = splitmix64(s);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
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

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [lo, hi], inclusive. Multiply-shift reduction; bias is < 2^-32 for
  /// the small ranges used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    const auto span = static_cast<unsigned __int128>(hi - lo + 1);
    return lo + static_cast<std::int64_t>((span * (*this)()) >> 64);
  }

  /// Exponential with the given rate (> 0).
  double exponential(double rate) noexcept { return -std::log1p(-uniform()) / rate; }

  /// Number of Bernoulli(p) trials up to and including the first success, >= 1.
  /// p <= 0 yields the largest representable count (never succeeds).
  std::int64_t geometric_trials(double p) noexcept {
    if (p <= 0.0) return std::numeric_limits<std::int64_t>::max();
    if (p >= 1.0) return 1;
    const double u = 1.0 - uniform();  // (0, 1]
    const double g = std::floor(std::log(u) / std::log1p(-p));
    if (g >= 9.0e18) return std::numeric_limits<std::int64_t>::max();
    return static_cast<std::int64_t>(g) + 1;
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

}  // namespace vbcast
