#pragma once

#include <cmath>

#include "mpl/common.hpp"

namespace mpl {

// Deterministic RNG stack used everywhere randomness matters. The generators
// are pinned in-repo (not delegated to the standard library) so that datasets,
// weight initialization and noise draws reproduce bit-for-bit across builds
// and platforms.

inline u64 splitmix64(u64& state) {
  state += 0x9E3779B97F4A7C15ull;
  u64 z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// xoshiro256++ with splitmix64 seeding.
class Rng {
public:
  explicit Rng(u64 seed) {
    u64 sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
    have_gauss_ = false;
    gauss_ = 0.0;
  }

  // Independent stream for a (seed, index) pair; used for per-sample streams.
  static Rng stream(u64 seed, u64 index) {
    u64 sm = seed ^ (0xD1B54A32D192ED03ull * (index + 1));
    return Rng(splitmix64(sm));
  }

  u64 next_u64() {
    const u64 result = rotl(state_[0] + state_[3], 23) + state_[0];
    const u64 t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection-free modulo bias is irrelevant at the
  // n values used here (pose library sizes, index shuffles), but use Lemire's
  // method anyway since it is exact and cheap.
  u64 uniform_int(u64 n) {
    if (n == 0) raise(Err::config_error, "uniform_int: n must be > 0");
    __uint128_t m = __uint128_t(next_u64()) * n;
    u64 lo = u64(m);
    if (lo < n) {
      u64 t = (0 - n) % n;
      while (lo < t) {
        m = __uint128_t(next_u64()) * n;
        lo = u64(m);
      }
    }
    return u64(m >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; second value of each pair is cached.
  double normal() {
    if (have_gauss_) {
      have_gauss_ = false;
      return gauss_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    gauss_ = r * std::sin(a);
    have_gauss_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
  static u64 rotl(u64 x, int k) { return (x << k) | (x >> (64 - k)); }

  u64 state_[4];
  bool have_gauss_;
  double gauss_;
};

}  // namespace mpl
