#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "flair/video.hpp"

namespace flair {

/// Seeded generator with a platform-independent normal sampler
/// (mt19937_64 + Box-Muller). Every stochastic op in the library draws from
/// this so seeded runs are reproducible bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in (0, 1).
  double uniform() {
    std::uint64_t bits = engine_() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  VideoTensor normal_tensor(const VideoShape& shape) {
    VideoTensor out(shape);
    for (double& v : out.values()) v = normal();
    out.set_unclamped(true);
    return out;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace flair
