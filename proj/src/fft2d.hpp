#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace flair::detail {

/// In-place 2D complex DFT on a fixed H x W grid. Plans are created once
/// (under a global lock, the FFTW planner is not reentrant) and executed
/// with the new-array interface, which is safe to call concurrently.
class Fft2d {
 public:
  Fft2d(std::size_t height, std::size_t width);
  ~Fft2d();
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return height_ * width_; }

  void forward(std::span<std::complex<double>> data) const;
  /// Unnormalized inverse; callers divide by size().
  void inverse(std::span<std::complex<double>> data) const;

 private:
  std::size_t height_;
  std::size_t width_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

/// Shared plan for an H x W grid; plans are cached and reused.
std::shared_ptr<const Fft2d> fft_plan(std::size_t height, std::size_t width);

}  // namespace flair::detail
