#pragma once

#include <cmath>
#include <cstdint>

namespace synf {

// Deterministic splitmix64 stream. std::normal_distribution and friends are
// implementation-defined, so all sampling here is spelled out explicitly:
// golden values and cross-run reproducibility depend on it.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // Derive an independent stream from (seed, key...) without sharing state.
  static Rng keyed(uint64_t seed, uint64_t k0, uint64_t k1 = 0, uint64_t k2 = 0) {
    Rng r(seed);
    r.state_ ^= 0x9e3779b97f4a7c15ull + (k0 << 1);
    r.next_u64();
    r.state_ ^= 0xbf58476d1ce4e5b9ull + (k1 << 1);
    r.next_u64();
    r.state_ ^= 0x94d049bb133111ebull + (k2 << 1);
    r.next_u64();
    return r;
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Box-Muller; caches the second variate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace synf
