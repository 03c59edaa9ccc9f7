#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "flair/jpeg.hpp"
#include "flair/kernel.hpp"
#include "flair/video.hpp"

namespace flair {

/// Relative singular-value threshold below which the correction filter is zeroed.
inline constexpr double kPinvEpsilon = 1e-10;

namespace detail {
struct Stage;
}

/// Composable per-frame measurement operator
///
///   y^n = E((h_n * x^n) decimated by s + e^n)
///
/// built from linear blur+decimate stages followed by optional JPEG
/// stages. All convolutions are circular, so A A^T is diagonal in the DFT
/// basis of the low-resolution grid and the pseudo-inverse
///
///   A^+ r = h~_n * (k_n * r) zero-filled by s
///
/// is exact, with k_n the (regularized) inverse of the decimated filter
/// (h_n * h~_n) decimated by s. Decimation keeps the top-left sample of
/// every s x s cell.
///
/// Operators are immutable; copies share their precomputed spectra.
class DegradationOperator {
 public:
  /// Identity on videos of `shape`.
  static DegradationOperator identity(const VideoShape& shape);

  /// Blur with one kernel per frame (or a single shared kernel), then
  /// decimate by `scale`. `scale` must divide height and width.
  static DegradationOperator blur_decimate(const VideoShape& input, std::vector<Kernel> kernels,
                                           std::size_t scale);

  /// JPEG encode-decode round trip at `quality`.
  static DegradationOperator jpeg(const VideoShape& input, int quality);

  /// Chains ops front to back. Noise levels must be zero on all but the last
  /// op, and JPEG stages may only be followed by other JPEG stages.
  static DegradationOperator compose(std::span<const DegradationOperator> ops);

  /// Same operator with additive Gaussian measurement noise of std `sigma`
  /// (model-range units), injected after the last linear stage.
  DegradationOperator with_noise(double sigma) const;

  const VideoShape& input_shape() const { return input_; }
  const VideoShape& output_shape() const { return output_; }
  double noise_sigma() const { return noise_sigma_; }

  /// True when no JPEG stage is present.
  bool is_linear() const;
  std::size_t stage_count() const { return stages_.size(); }

  /// Full forward model. Noise is drawn only when a seed is supplied.
  VideoTensor apply(const VideoTensor& x, std::optional<std::uint64_t> noise_seed = {}) const;

  /// Linear stages only: no noise, no JPEG.
  VideoTensor apply_linear(const VideoTensor& x) const;

  /// Exact adjoint of apply_linear: zero-fill upsampling, then correlation
  /// with h_n (convolution with the mirrored kernel).
  VideoTensor adjoint(const VideoTensor& y) const;

  /// A^+ r, chaining stage pseudo-inverses back to front. JPEG stages act as
  /// the identity here: residuals reaching them are already decoded pixels.
  VideoTensor pseudo_apply(const VideoTensor& r) const;

  /// Measurement-domain residual used by data consistency:
  /// D(E(A x)) - y for composite operators, A x - y otherwise.
  VideoTensor residual(const VideoTensor& x, const VideoTensor& y) const;

  /// Kernels of the first blur stage (empty if none).
  std::vector<Kernel> kernels() const;
  /// Product of all decimation factors.
  std::size_t total_scale() const;

  /// Correction spectrum K^ of the first blur stage for frame n, laid out
  /// row-major on the low-resolution grid.
  std::vector<std::complex<double>> correction_spectrum(std::size_t frame) const;

 private:
  DegradationOperator() = default;

  VideoShape input_;
  VideoShape output_;
  double noise_sigma_ = 0.0;
  std::vector<std::shared_ptr<const detail::Stage>> stages_;
};

/// v + sigma * g with g standard normal, drawn deterministically from seed.
VideoTensor add_noise(const VideoTensor& v, double sigma, std::uint64_t seed);

/// Periodic Gaussian smoothing of every frame and channel with std `radius`
/// pixels (transfer function exp(-2 pi^2 radius^2 |f|^2)). radius = 0 is the
/// identity.
VideoTensor gaussian_smooth(const VideoTensor& v, double radius);

}  // namespace flair
