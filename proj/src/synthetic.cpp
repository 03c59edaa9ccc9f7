#include "flair/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "flair/rng.hpp"

namespace flair {

VideoTensor make_smooth_motion_video(const SmoothMotionParams& p) {
  if (p.frames == 0 || p.height == 0 || p.width == 0) {
    throw std::invalid_argument("make_smooth_motion_video: empty shape");
  }
  struct Wave {
    double kx, ky, phase, amp;
  };
  Rng rng(p.seed);
  std::vector<std::vector<Wave>> waves(p.channels);
  for (auto& per_channel : waves) {
    for (int i = 0; i < p.components; ++i) {
      Wave w;
      w.kx = std::floor(rng.uniform() * (2 * p.max_frequency + 1)) - p.max_frequency;
      w.ky = std::floor(rng.uniform() * (2 * p.max_frequency + 1)) - p.max_frequency;
      w.phase = 2.0 * std::numbers::pi * rng.uniform();
      // 1/f falloff keeps the pattern smooth.
      w.amp = 1.0 / (1.0 + std::hypot(w.kx, w.ky));
      per_channel.push_back(w);
    }
  }

  VideoTensor v(VideoShape{p.frames, p.height, p.width, p.channels});
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t n = 0; n < p.frames; ++n) {
    const double ox = static_cast<double>(n) * p.velocity_x;
    const double oy = static_cast<double>(n) * p.velocity_y;
    for (std::size_t y = 0; y < p.height; ++y)
      for (std::size_t x = 0; x < p.width; ++x)
        for (std::size_t c = 0; c < p.channels; ++c) {
          double s = 0.0;
          for (const Wave& w : waves[c]) {
            s += w.amp * std::cos(two_pi * (w.kx * (static_cast<double>(x) - ox) / p.width +
                                            w.ky * (static_cast<double>(y) - oy) / p.height) +
                                  w.phase);
          }
          v.at(n, y, x, c) = s;
        }
  }
  double peak = max_abs(v);
  if (peak > 0.0) v = (p.amplitude / peak) * v;
  return v;
}

}  // namespace flair
