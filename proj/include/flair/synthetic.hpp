#pragma once

#include <cstdint>

#include "flair/video.hpp"

namespace flair {

struct SmoothMotionParams {
  std::size_t frames = 10;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t channels = 1;
  double velocity_x = 1.0;  // pixels per frame
  double velocity_y = 0.0;
  int components = 12;      // random periodic Fourier components
  int max_frequency = 6;    // cycles per frame side
  double amplitude = 0.8;   // peak |value|
  std::uint64_t seed = 1;
};

/// Deterministic test video: a random smooth periodic pattern translated by
/// a constant velocity, so frame n+1 at p + v equals frame n at p.
VideoTensor make_smooth_motion_video(const SmoothMotionParams& params);

}  // namespace flair
