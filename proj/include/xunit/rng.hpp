#pragma once

#include <cmath>
#include <cstdint>

namespace xunit {

// Portable, seedable generator: xoshiro256** seeded through splitmix64.
// The algorithm is fixed so datasets and initializations reproduce
// across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : state_) {
      // splitmix64
      x += 0x9e3779b97f4a7c15ULL;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound). Lemire multiply-shift; the bias for
  // bounds below 2^32 is unobservable here.
  uint64_t next_below(uint64_t bound) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * bound) >> 64);
  }

  bool next_bool() { return (next_u64() >> 63) != 0; }

  // Standard normal via Box-Muller on the portable stream.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Deterministically derived sub-stream, for per-worker / per-epoch use.
  Rng split(uint64_t stream_id) {
    uint64_t mix = next_u64() ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1));
    return Rng(mix);
  }

 private:
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  uint64_t state_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace xunit
