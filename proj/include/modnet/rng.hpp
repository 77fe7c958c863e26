#pragma once

#include <cmath>
#include <cstdint>

namespace modnet {

// Deterministic 64-bit generator (splitmix64). Every source of randomness in
// the project flows through explicitly seeded instances, so runs are
// reproducible bit-for-bit and independent streams can be derived per sample,
// per parameter group, or per batch without shared state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the spare value.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.28318530717958647692528676655900577 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  // Uniform integer in [0, n). Modulo bias is negligible at desk scale.
  uint64_t below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Seed for an independent stream derived from (seed, tag).
inline uint64_t substream(uint64_t seed, uint64_t tag) {
  Rng r(seed ^ (0x9e3779b97f4a7c15ull * (tag + 0x632be59bd9b4e019ull)));
  r.next_u64();
  return r.next_u64();
}

}  // namespace modnet
