#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace panoseg {

// Counter-based PRNG (splitmix64 finalizer over key + counter).
// Output i of a stream is a pure function of (seed, i), so runs are
// reproducible across platforms, compilers and thread counts. All stochastic
// parts of the system (dropout, augmentation, interpolation epsilons, SWD
// projections) draw from streams of this type.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0, uint64_t counter = 0)
      : key_(mix(seed ^ 0x4cf5ad432745937fULL)), ctr_(counter) {}

  uint64_t next_u64() { return mix(key_ + (++ctr_) * 0x9e3779b97f4a7c15ULL); }

  // Derive an independent stream for a tagged sub-purpose.
  Rng split(uint64_t tag) const { return Rng(mix(key_ ^ mix(tag + 0x94d049bb133111ebULL))); }

  // Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_index(uint64_t n) {
    // Lemire's multiply-shift; bias is rejected away.
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t thresh = (0 - n) % n;
      while (lo < thresh) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (second value cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  // First k elements of a random permutation of [0, n).
  std::vector<uint64_t> sample_indices(uint64_t n, uint64_t k) {
    std::vector<uint64_t> idx(n);
    for (uint64_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (uint64_t i = 0; i < k; ++i) {
      uint64_t j = i + uniform_index(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t ctr_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace panoseg
