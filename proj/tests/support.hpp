#pragma once

// Shared generators for property tests.

#include <cstdint>
#include <random>

#include "uamsim/geometry.hpp"

namespace uam::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

  Vec3 in_ball(double radius) {
    for (;;) {
      const Vec3 v{uniform(-radius, radius), uniform(-radius, radius), uniform(-radius, radius)};
      if (norm(v) <= radius) return v;
    }
  }
  Vec3 unit() {
    for (;;) {
      const Vec3 v = in_ball(1.0);
      const double n = norm(v);
      if (n > 1e-3) return v / n;
    }
  }
  Vec2 in_box(double x0, double x1, double y0, double y1) { return {uniform(x0, x1), uniform(y0, y1)}; }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace uam::testing
