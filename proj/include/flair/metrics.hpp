#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "flair/video.hpp"

namespace flair {

/// Per-frame PSNR in dB on the [0, 1] range; +inf when the frames match.
std::vector<double> psnr(const VideoTensor& a, const VideoTensor& b);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Per-frame mean SSIM on the [0, 1] range: Gaussian-weighted local
/// statistics over every fully contained window, averaged over windows and
/// then over channels.
std::vector<double> ssim(const VideoTensor& a, const VideoTensor& b, const SsimParams& params = {});

/// Mean over frame pairs of the masked mean of ||x^n - warp(x^{n+1}, flow^n)||^2,
/// with bilinear warping, on the [0, 1] range.
double warping_error(const VideoTensor& v, const FlowField& flow);

struct MetricReport {
  std::vector<double> psnr;
  std::vector<double> ssim;
  std::optional<double> e_warp;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// `restored` vs `reference`; e_warp is computed on `restored` when a flow is given.
MetricReport evaluate(const VideoTensor& restored, const VideoTensor& reference,
                      const FlowField* flow = nullptr);

}  // namespace flair
