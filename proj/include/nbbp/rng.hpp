#pragma once

// Seeded random streams. Uniform and normal variates are produced by fixed
// transforms of the raw 64-bit engine output so that draws are identical
// across standard library implementations.

#include <cstdint>
#include <random>

#include "nbbp/special_fn.hpp"

namespace nbbp {

inline constexpr std::uint64_t kDefaultSeed = 20240611;

class RandomStream {
 public:
  /// Independent sub-stream `index` of `seed`.
  explicit RandomStream(std::uint64_t seed, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double open_uniform() {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return std_normal_quantile(open_uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nbbp
