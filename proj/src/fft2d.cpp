#include "fft2d.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>
#include <stdexcept>

namespace flair::detail {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Fft2d::Fft2d(std::size_t height, std::size_t width) : height_(height), width_(width) {
  if (height == 0 || width == 0) throw std::invalid_argument("Fft2d: empty grid");
  std::vector<std::complex<double>> scratch(size());
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  int h = static_cast<int>(height);
  int w = static_cast<int>(width);
  std::lock_guard lock(planner_mutex());
  forward_plan_ = fftw_plan_dft_2d(h, w, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  inverse_plan_ = fftw_plan_dft_2d(h, w, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!forward_plan_ || !inverse_plan_) throw std::runtime_error("Fft2d: FFTW planning failed");
}

Fft2d::~Fft2d() {
  std::lock_guard lock(planner_mutex());
  if (forward_plan_) fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  if (inverse_plan_) fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void Fft2d::forward(std::span<std::complex<double>> data) const {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(forward_plan_), buf, buf);
}

void Fft2d::inverse(std::span<std::complex<double>> data) const {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(inverse_plan_), buf, buf);
}

std::shared_ptr<const Fft2d> fft_plan(std::size_t height, std::size_t width) {
  static std::mutex cache_mutex;
  static std::map<std::pair<std::size_t, std::size_t>, std::weak_ptr<const Fft2d>> cache;
  std::lock_guard lock(cache_mutex);
  auto& slot = cache[{height, width}];
  if (auto p = slot.lock()) return p;
  auto p = std::make_shared<const Fft2d>(height, width);
  slot = p;
  return p;
}

}  // namespace flair::detail
