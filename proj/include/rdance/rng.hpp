#pragma once

#include <cmath>
#include <cstdint>

namespace rdance {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stateless hash of a key tuple, for counter-based randomness
/// (dropout masks, per-clip jitter) that must not depend on call order.
inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline uint64_t hash3(uint64_t a, uint64_t b, uint64_t c) {
  return hash_combine(hash_combine(a, b), c);
}

inline uint64_t hash4(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return hash_combine(hash3(a, b, c), d);
}

/// uniform in [0, 1)
inline double u01(uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Small deterministic PRNG (splitmix64 stream). Used everywhere randomness
/// is needed so results are reproducible across platforms and stdlibs.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  /// uniform in [0, 1)
  double uniform() { return u01(next()); }

  /// uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// uniform integer in [0, n)
  uint64_t below(uint64_t n) { return n ? next() % n : 0; }

  /// standard normal via Box-Muller
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace rdance
