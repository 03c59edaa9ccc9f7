#include "flair/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <numbers>
#include <stdexcept>
#include <string>

#include "flair/rng.hpp"

namespace flair {

Kernel::Kernel(std::size_t size, std::vector<double> weights)
    : size_(size), weights_(std::move(weights)) {
  if (size_ % 2 == 0) throw std::invalid_argument("Kernel: size must be odd");
  if (weights_.size() != size_ * size_) {
    throw std::invalid_argument("Kernel: expected " + std::to_string(size_ * size_) +
                                " weights, got " + std::to_string(weights_.size()));
  }
  double s = sum();
  if (!std::isfinite(s) || std::abs(s) < 1e-300) {
    throw std::invalid_argument("Kernel: weights must have a finite nonzero sum");
  }
  for (double& w : weights_) w /= s;
  if (std::abs(sum() - 1.0) > 1e-12) throw std::invalid_argument("Kernel: normalization failed");
}

Kernel Kernel::delta(std::size_t size) {
  std::vector<double> w(size * size, 0.0);
  w[(size / 2) * size + size / 2] = 1.0;
  return Kernel(size, std::move(w));
}

Kernel Kernel::mirrored() const {
  std::vector<double> w(weights_.rbegin(), weights_.rend());
  return Kernel(size_, std::move(w));
}

double Kernel::sum() const { return std::accumulate(weights_.begin(), weights_.end(), 0.0); }

bool Kernel::non_negative() const {
  return std::all_of(weights_.begin(), weights_.end(), [](double w) { return w >= 0.0; });
}

Kernel make_gaussian_kernel(std::size_t size, double sigma_x, double sigma_y, double theta) {
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) {
    throw std::invalid_argument("make_gaussian_kernel: sigmas must be positive");
  }
  if (size % 2 == 0) throw std::invalid_argument("make_gaussian_kernel: size must be odd");
  // Inverse covariance of R diag(sx^2, sy^2) R^T.
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double ix = 1.0 / (sigma_x * sigma_x);
  const double iy = 1.0 / (sigma_y * sigma_y);
  const double a = c * c * ix + s * s * iy;
  const double b = c * s * (ix - iy);
  const double d = s * s * ix + c * c * iy;

  const int r = static_cast<int>(size / 2);
  std::vector<double> w(size * size);
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      double q = a * dx * dx + 2.0 * b * dx * dy + d * dy * dy;
      w[static_cast<std::size_t>(dy + r) * size + static_cast<std::size_t>(dx + r)] =
          std::exp(-0.5 * q);
    }
  }
  return Kernel(size, std::move(w));
}

Kernel make_motion_kernel(std::size_t size, std::uint64_t seed, double intensity) {
  if (size % 2 == 0) throw std::invalid_argument("make_motion_kernel: size must be odd");
  if (!(intensity >= 0.0 && intensity <= 1.0)) {
    throw std::invalid_argument("make_motion_kernel: intensity must lie in [0, 1]");
  }
  const double max_length = intensity * static_cast<double>(size - 1);
  if (max_length == 0.0) return Kernel::delta(size);

  // Trajectory constants: centripetal pull in [0, 0.7), Gaussian jitter
  // scale in [0, 10), abrupt-shake probability in [0, 0.2).
  Rng rng(seed);
  const double centripetal = 0.7 * rng.uniform();
  const double gaussian_term = 10.0 * rng.uniform();
  const double shake_freq = 0.2 * rng.uniform();
  const double angle0 = 2.0 * std::numbers::pi * rng.uniform();

  const int n = kMotionSubsteps;
  const double step = max_length / (n - 1);
  using cplx = std::complex<double>;
  std::vector<cplx> x(n, cplx(0.0, 0.0));
  cplx v = step * std::polar(1.0, angle0);
  for (int t = 0; t + 1 < n; ++t) {
    cplx next_direction(0.0, 0.0);
    if (rng.uniform() < shake_freq * intensity) {
      next_direction = 2.0 * v * std::polar(1.0, std::numbers::pi + (rng.uniform() - 0.5));
    }
    double gx = rng.normal();
    double gy = rng.normal();
    cplx dv = next_direction +
              intensity * (gaussian_term * cplx(gx, gy) - centripetal * x[t]) * step;
    v += dv;
    double mag = std::abs(v);
    v = mag > 0.0 ? v / mag * step : step * std::polar(1.0, angle0);
    x[t + 1] = x[t] + v;
  }

  // Center the bounding box on the kernel origin and shrink if needed.
  double min_x = x[0].real(), max_x = x[0].real(), min_y = x[0].imag(), max_y = x[0].imag();
  for (const cplx& p : x) {
    min_x = std::min(min_x, p.real());
    max_x = std::max(max_x, p.real());
    min_y = std::min(min_y, p.imag());
    max_y = std::max(max_y, p.imag());
  }
  const cplx center(0.5 * (min_x + max_x), 0.5 * (min_y + max_y));
  const double extent = std::max(max_x - min_x, max_y - min_y);
  const double limit = static_cast<double>(size - 1);
  const double shrink = extent > limit ? limit / extent : 1.0;

  const int r = static_cast<int>(size / 2);
  std::vector<double> w(size * size, 0.0);
  auto splat = [&](int iy, int ix, double weight) {
    if (weight == 0.0) return;
    if (iy < -r || iy > r || ix < -r || ix > r) return;
    w[static_cast<std::size_t>(iy + r) * size + static_cast<std::size_t>(ix + r)] += weight;
  };
  for (const cplx& p : x) {
    cplx q = (p - center) * shrink;
    double px = std::clamp(q.real(), -static_cast<double>(r), static_cast<double>(r));
    double py = std::clamp(q.imag(), -static_cast<double>(r), static_cast<double>(r));
    int x0 = static_cast<int>(std::floor(px));
    int y0 = static_cast<int>(std::floor(py));
    double fx = px - x0;
    double fy = py - y0;
    splat(y0, x0, (1 - fx) * (1 - fy));
    splat(y0, x0 + 1, fx * (1 - fy));
    splat(y0 + 1, x0, (1 - fx) * fy);
    splat(y0 + 1, x0 + 1, fx * fy);
  }
  return Kernel(size, std::move(w));
}

double cubic_weight(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

Kernel make_bicubic_kernel(std::size_t scale) {
  if (scale == 0) throw std::invalid_argument("make_bicubic_kernel: scale must be positive");
  if (scale == 1) return Kernel::delta(1);
  const int r = static_cast<int>(2 * scale);
  const std::size_t size = static_cast<std::size_t>(2 * r + 1);
  std::vector<double> taps(size);
  for (int d = -r; d <= r; ++d) {
    taps[static_cast<std::size_t>(d + r)] =
        cubic_weight(static_cast<double>(d) / static_cast<double>(scale)) /
        static_cast<double>(scale);
  }
  std::vector<double> w(size * size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) w[i * size + j] = taps[i] * taps[j];
  return Kernel(size, std::move(w));
}

Kernel make_box_kernel(std::size_t size) {
  return Kernel(size, std::vector<double>(size * size, 1.0));
}

Kernel read_kernel(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open kernel file " + path.string());
  std::size_t k = 0;
  if (!(is >> k) || k == 0) throw std::runtime_error(path.string() + ": missing kernel size");
  std::vector<double> w(k * k);
  for (double& v : w) {
    if (!(is >> v)) throw std::runtime_error(path.string() + ": expected " +
                                             std::to_string(k * k) + " kernel weights");
  }
  return Kernel(k, std::move(w));
}

void write_kernel(const Kernel& k, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.precision(17);
  os << k.size() << '\n';
  for (std::size_t i = 0; i < k.size(); ++i) {
    for (std::size_t j = 0; j < k.size(); ++j) {
      if (j) os << ' ';
      os << k.weights()[i * k.size() + j];
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace flair
