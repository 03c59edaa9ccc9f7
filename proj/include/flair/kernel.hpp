#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace flair {

/// Odd-sized square blur kernel, normalized to unit sum. Weight (dy, dx)
/// is the tap at offset (dy, dx) from the center.
class Kernel {
 public:
  /// Validates oddness and unit sum (within 1e-12 after renormalization).
  Kernel(std::size_t size, std::vector<double> weights);

  static Kernel delta(std::size_t size = 1);

  std::size_t size() const { return size_; }
  int radius() const { return static_cast<int>(size_ / 2); }
  const std::vector<double>& weights() const { return weights_; }

  double operator()(int dy, int dx) const {
    return weights_[static_cast<std::size_t>(dy + radius()) * size_ +
                    static_cast<std::size_t>(dx + radius())];
  }

  /// h~(dy, dx) = h(-dy, -dx).
  Kernel mirrored() const;

  double sum() const;
  bool non_negative() const;

  friend bool operator==(const Kernel&, const Kernel&) = default;

 private:
  std::size_t size_;
  std::vector<double> weights_;
};

/// Rotated anisotropic Gaussian sampled at integer offsets:
/// w(p) ∝ exp(-p^T R diag(sx^2, sy^2)^-1 R^T p / 2), R the rotation by theta.
Kernel make_gaussian_kernel(std::size_t size, double sigma_x, double sigma_y, double theta);

/// Random camera-shake kernel. A trajectory of kMotionSubsteps points is
/// generated by a velocity random walk with centripetal pull and Gaussian
/// jitter (scaled by intensity), optionally perturbed by abrupt direction
/// changes, then splatted bilinearly onto the grid.
Kernel make_motion_kernel(std::size_t size, std::uint64_t seed, double intensity);

inline constexpr int kMotionSubsteps = 256;

/// Keys cubic-convolution (a = -0.5) antialiasing kernel for decimation by
/// `scale`: taps cubic(d / scale) / scale for |d| <= 2 * scale, outer product.
/// Contains negative lobes.
Kernel make_bicubic_kernel(std::size_t scale);

Kernel make_box_kernel(std::size_t size);

/// Keys cubic convolution weight, a = -0.5.
double cubic_weight(double x);

/// Text format: first line k, then k rows of k reals.
Kernel read_kernel(const std::filesystem::path& path);
void write_kernel(const Kernel& k, const std::filesystem::path& path);

}  // namespace flair
