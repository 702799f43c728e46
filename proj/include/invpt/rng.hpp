#pragma once

#include <cstdint>
#include <cmath>

namespace invpt {

/// Counter-based deterministic PRNG (splitmix64). Identical seed gives a
/// bit-identical draw sequence on every platform; no libc distributions are
/// used anywhere so streams stay reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Standard normal via Box-Muller (u1 shifted into (0, 1]).
  double normal() {
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Uniform integer in [0, n). n must be positive.
  int64_t below(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

  bool coin() { return (next_u64() & 1u) != 0; }

  /// Derive an independent stream, e.g. one per dataset index.
  Rng fork(uint64_t stream) const {
    Rng r(state_ ^ (0xA0761D6478BD642FULL * (stream + 1)));
    r.next_u64();
    return r;
  }

 private:
  uint64_t state_;
};

}  // namespace invpt
