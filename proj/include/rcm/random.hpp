#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace rcm {

/// SplitMix64 finalizer; used to expand seeds and to hash seed keys.
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 128-bit seed digest of an ordered key tuple.
struct SeedKey {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  static SeedKey hash(std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t a = 0x243f6a8885a308d3ULL;
    std::uint64_t b = 0x13198a2e03707344ULL;
    for (std::uint64_t w : words) {
      a ^= w;
      b ^= w * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL;
      std::uint64_t sa = a, sb = b;
      a = splitmix64(sa) ^ (b << 1);
      b = splitmix64(sb) ^ (a >> 1);
    }
    return {a, b};
  }
};

/// xoshiro256** random stream. Satisfies UniformRandomBitGenerator, so it
/// plugs into the <random> distributions; the helpers below are the hot-path
/// draws used by the simulators.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed = 0) noexcept { reseed(SeedKey{seed, ~seed}); }
  explicit Stream(const SeedKey& key) noexcept { reseed(key); }

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

  /// Uniform on (0, 1].
  double uniform_pos() noexcept { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }
  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  /// Exp(1).
  double exponential() noexcept { return -std::log(uniform_pos()); }
  /// 63-bit draw, compared against thresholds in [0, 2^63].
  std::uint64_t bits63() noexcept { return (*this)() >> 1; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  void reseed(const SeedKey& key) noexcept {
    std::uint64_t sm = key.hi ^ 0x5851f42d4c957f2dULL;
    std::uint64_t sm2 = key.lo ^ 0x14057b7ef767814fULL;
    s_[0] = splitmix64(sm);
    s_[1] = splitmix64(sm2);
    s_[2] = splitmix64(sm);
    s_[3] = splitmix64(sm2);
  }

  std::uint64_t s_[4];
};

/// Scheduler-independent substream for one replica of one experiment.
inline Stream substream(std::uint64_t master_seed, std::uint64_t experiment_id,
                        std::uint64_t environment_index, std::uint64_t replica_index) {
  return Stream(SeedKey::hash({master_seed, experiment_id, environment_index, replica_index}));
}

}  // namespace rcm
