#include "flair/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "fft2d.hpp"
#include "flair/rng.hpp"

namespace flair {

namespace detail {

using cplx = std::complex<double>;

struct Stage {
  VideoShape input;
  VideoShape output;

  virtual ~Stage() = default;
  virtual bool linear() const = 0;
  virtual VideoTensor forward(const VideoTensor& x) const = 0;
  virtual VideoTensor adjoint(const VideoTensor& y) const = 0;
  virtual VideoTensor pseudo(const VideoTensor& r) const = 0;
};

namespace {

// Kernel taps wrapped onto a periodic H x W grid, origin at (0, 0).
std::vector<cplx> embed_kernel(const Kernel& k, std::size_t h, std::size_t w) {
  std::vector<cplx> grid(h * w, cplx(0.0, 0.0));
  const int r = k.radius();
  const auto ih = static_cast<long>(h);
  const auto iw = static_cast<long>(w);
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      long y = ((dy % ih) + ih) % ih;
      long x = ((dx % iw) + iw) % iw;
      grid[static_cast<std::size_t>(y * iw + x)] += k(dy, dx);
    }
  }
  return grid;
}

void load_plane(const VideoTensor& v, std::size_t n, std::size_t c, std::vector<cplx>& buf) {
  auto f = v.frame(n);
  const std::size_t ch = v.channels();
  buf.resize(v.height() * v.width());
  for (std::size_t p = 0; p < buf.size(); ++p) buf[p] = cplx(f[p * ch + c], 0.0);
}

}  // namespace

class BlurDecimateStage final : public Stage {
 public:
  BlurDecimateStage(const VideoShape& in, std::vector<Kernel> kernels, std::size_t scale)
      : kernels_(std::move(kernels)), scale_(scale) {
    if (scale_ == 0) throw std::invalid_argument("blur_decimate: scale must be positive");
    if (in.height % scale_ != 0 || in.width % scale_ != 0) {
      throw std::invalid_argument("blur_decimate: scale " + std::to_string(scale_) +
                                  " does not divide frame size " + std::to_string(in.height) +
                                  "x" + std::to_string(in.width));
    }
    if (kernels_.empty() || (kernels_.size() != 1 && kernels_.size() != in.frames)) {
      throw std::invalid_argument("blur_decimate: need one kernel or one per frame (" +
                                  std::to_string(in.frames) + "), got " +
                                  std::to_string(kernels_.size()));
    }
    input = in;
    output = in;
    output.height = in.height / scale_;
    output.width = in.width / scale_;
    hi_ = fft_plan(input.height, input.width);
    lo_ = fft_plan(output.height, output.width);

    const std::size_t lw = output.height * output.width;
    identity_ = scale_ == 1 && std::all_of(kernels_.begin(), kernels_.end(), [](const Kernel& k) {
      const int r = k.radius();
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (k(dy, dx) != ((dy == 0 && dx == 0) ? 1.0 : 0.0)) return false;
      return true;
    });
    for (const Kernel& k : kernels_) {
      std::vector<cplx> spec = embed_kernel(k, input.height, input.width);
      hi_->forward(spec);

      // Spectrum of (h * h~) decimated: alias sum of |H|^2 onto the coarse grid.
      std::vector<double> g_low(lw, 0.0);
      for (std::size_t y = 0; y < input.height; ++y)
        for (std::size_t x = 0; x < input.width; ++x)
          g_low[(y % output.height) * output.width + x % output.width] += std::norm(spec[y * input.width + x]);
      for (double& v : g_low) v /= static_cast<double>(scale_ * scale_);

      double peak = 0.0;
      for (double v : g_low) peak = std::max(peak, v);
      std::vector<cplx> correction(lw, cplx(0.0, 0.0));
      std::size_t kept = 0;
      for (std::size_t i = 0; i < lw; ++i) {
        // singular values of A are sqrt(g)
        if (g_low[i] > kPinvEpsilon * kPinvEpsilon * peak) {
          correction[i] = cplx(1.0 / g_low[i], 0.0);
          ++kept;
        }
      }
      if (peak == 0.0 || kept == 0) {
        throw std::invalid_argument("blur_decimate: correction spectrum is fully degenerate");
      }
      spectra_.push_back(std::move(spec));
      corrections_.push_back(std::move(correction));
    }
  }

  bool linear() const override { return true; }

  VideoTensor forward(const VideoTensor& x) const override {
    require_input(x);
    if (identity_) return x;
    VideoTensor out(output);
    out.set_unclamped(x.unclamped());
    std::vector<cplx> buf;
    const double norm = 1.0 / static_cast<double>(hi_->size());
    for (std::size_t n = 0; n < input.frames; ++n) {
      const auto& h = spectra_[kernel_index(n)];
      auto dst = out.frame(n);
      for (std::size_t c = 0; c < input.channels; ++c) {
        load_plane(x, n, c, buf);
        hi_->forward(buf);
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= h[i];
        hi_->inverse(buf);
        for (std::size_t y = 0; y < output.height; ++y)
          for (std::size_t xx = 0; xx < output.width; ++xx)
            dst[(y * output.width + xx) * input.channels + c] =
                buf[(y * scale_) * input.width + xx * scale_].real() * norm;
      }
    }
    return out;
  }

  VideoTensor adjoint(const VideoTensor& y) const override {
    require_output(y);
    if (identity_) return y;
    VideoTensor out(input);
    out.set_unclamped(y.unclamped());
    for (std::size_t n = 0; n < input.frames; ++n) {
      for (std::size_t c = 0; c < input.channels; ++c) {
        std::vector<cplx> plane = upsample(y, n, c);
        std::vector<cplx> buf = correlate(plane, n);
        store(out, n, c, buf);
      }
    }
    return out;
  }

  // Entirely in the frequency domain: zero-fill upsampling tiles the coarse
  // spectrum, so A+ r = IFFT(conj(H) K(k mod) R(k mod)).
  VideoTensor pseudo(const VideoTensor& r) const override {
    require_output(r);
    if (identity_) return r;
    VideoTensor out(input);
    out.set_unclamped(r.unclamped());
    std::vector<cplx> low;
    std::vector<cplx> fine(hi_->size());
    for (std::size_t n = 0; n < input.frames; ++n) {
      const auto& h = spectra_[kernel_index(n)];
      const auto& k = corrections_[kernel_index(n)];
      for (std::size_t c = 0; c < input.channels; ++c) {
        load_plane(r, n, c, low);
        lo_->forward(low);
        for (std::size_t y = 0; y < input.height; ++y)
          for (std::size_t x = 0; x < input.width; ++x) {
            const std::size_t i = (y % output.height) * output.width + x % output.width;
            const std::size_t f = y * input.width + x;
            fine[f] = std::conj(h[f]) * (k[i] * low[i]);
          }
        hi_->inverse(fine);
        store(out, n, c, fine);
      }
    }
    return out;
  }

  const std::vector<Kernel>& kernels() const { return kernels_; }
  std::size_t scale() const { return scale_; }
  const std::vector<cplx>& correction(std::size_t n) const {
    return corrections_[kernel_index(n)];
  }

 private:
  std::size_t kernel_index(std::size_t n) const { return kernels_.size() == 1 ? 0 : n; }

  void require_input(const VideoTensor& x) const {
    if (x.shape() != input) throw std::invalid_argument("operator: input shape mismatch");
  }
  void require_output(const VideoTensor& y) const {
    if (y.shape() != output) throw std::invalid_argument("operator: measurement shape mismatch");
  }

  // Zero-fill upsampling onto the fine grid.
  std::vector<cplx> upsample(const VideoTensor& y, std::size_t n, std::size_t c) const {
    std::vector<cplx> plane(hi_->size(), cplx(0.0, 0.0));
    auto f = y.frame(n);
    for (std::size_t yy = 0; yy < output.height; ++yy)
      for (std::size_t x = 0; x < output.width; ++x)
        plane[(yy * scale_) * input.width + x * scale_] =
            f[(yy * output.width + x) * input.channels + c];
    return plane;
  }

  // Circular correlation with h_n, i.e. convolution with the mirrored kernel.
  std::vector<cplx> correlate(std::vector<cplx> plane, std::size_t n) const {
    const auto& h = spectra_[kernel_index(n)];
    hi_->forward(plane);
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] *= std::conj(h[i]);
    hi_->inverse(plane);
    return plane;
  }

  void store(VideoTensor& out, std::size_t n, std::size_t c, const std::vector<cplx>& buf) const {
    const double norm = 1.0 / static_cast<double>(hi_->size());
    auto dst = out.frame(n);
    for (std::size_t p = 0; p < buf.size(); ++p) dst[p * input.channels + c] = buf[p].real() * norm;
  }

  std::vector<Kernel> kernels_;
  std::size_t scale_;
  bool identity_ = false;  // centered delta, no decimation
  std::shared_ptr<const Fft2d> hi_;
  std::shared_ptr<const Fft2d> lo_;
  std::vector<std::vector<cplx>> spectra_;
  std::vector<std::vector<cplx>> corrections_;
};

class JpegStage final : public Stage {
 public:
  JpegStage(const VideoShape& shape, int quality) : codec_(quality) {
    input = shape;
    output = shape;
  }

  bool linear() const override { return false; }
  VideoTensor forward(const VideoTensor& x) const override {
    VideoTensor out = codec_.round_trip(x);
    out.set_unclamped(x.unclamped());
    return out;
  }
  // JPEG has no linear adjoint; the linear-part contract treats it as the identity.
  VideoTensor adjoint(const VideoTensor& y) const override { return y; }
  VideoTensor pseudo(const VideoTensor& r) const override { return r; }

  const JpegCodec& codec() const { return codec_; }

 private:
  JpegCodec codec_;
};

}  // namespace detail

DegradationOperator DegradationOperator::identity(const VideoShape& shape) {
  DegradationOperator op;
  op.input_ = shape;
  op.output_ = shape;
  return op;
}

DegradationOperator DegradationOperator::blur_decimate(const VideoShape& input,
                                                       std::vector<Kernel> kernels,
                                                       std::size_t scale) {
  auto stage = std::make_shared<detail::BlurDecimateStage>(input, std::move(kernels), scale);
  DegradationOperator op;
  op.input_ = stage->input;
  op.output_ = stage->output;
  op.stages_.push_back(std::move(stage));
  return op;
}

DegradationOperator DegradationOperator::jpeg(const VideoShape& input, int quality) {
  auto stage = std::make_shared<detail::JpegStage>(input, quality);
  DegradationOperator op;
  op.input_ = input;
  op.output_ = input;
  op.stages_.push_back(std::move(stage));
  return op;
}

DegradationOperator DegradationOperator::compose(std::span<const DegradationOperator> ops) {
  if (ops.empty()) throw std::invalid_argument("compose: empty operator list");
  DegradationOperator out;
  out.input_ = ops.front().input_;
  out.output_ = ops.front().input_;
  bool seen_jpeg = false;
  bool seen_noise = false;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const auto& op = ops[i];
    if (op.input_ != out.output_) {
      throw std::invalid_argument("compose: operator " + std::to_string(i) +
                                  " input shape does not match the previous output");
    }
    for (const auto& s : op.stages_) {
      if (s->linear() && seen_jpeg) {
        throw std::invalid_argument("compose: linear stages must precede JPEG stages");
      }
      if (s->linear() && seen_noise) {
        throw std::invalid_argument("compose: noise must follow the last linear stage");
      }
      seen_jpeg = seen_jpeg || !s->linear();
      out.stages_.push_back(s);
    }
    if (op.noise_sigma_ > 0.0) {
      if (seen_noise) throw std::invalid_argument("compose: more than one noise source");
      seen_noise = true;
      out.noise_sigma_ = op.noise_sigma_;
    }
    out.output_ = op.output_;
  }
  return out;
}

DegradationOperator DegradationOperator::with_noise(double sigma) const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("with_noise: sigma must be finite and non-negative");
  }
  DegradationOperator op = *this;
  op.noise_sigma_ = sigma;
  return op;
}

bool DegradationOperator::is_linear() const {
  return std::all_of(stages_.begin(), stages_.end(), [](const auto& s) { return s->linear(); });
}

VideoTensor DegradationOperator::apply(const VideoTensor& x,
                                       std::optional<std::uint64_t> noise_seed) const {
  if (x.shape() != input_) throw std::invalid_argument("apply: input shape mismatch");
  VideoTensor cur = x;
  bool noise_done = false;
  auto inject = [&] {
    if (!noise_done && noise_seed && noise_sigma_ > 0.0) cur = add_noise(cur, noise_sigma_, *noise_seed);
    noise_done = true;
  };
  for (const auto& s : stages_) {
    if (!s->linear()) inject();
    cur = s->forward(cur);
  }
  inject();
  return cur;
}

VideoTensor DegradationOperator::apply_linear(const VideoTensor& x) const {
  if (x.shape() != input_) throw std::invalid_argument("apply_linear: input shape mismatch");
  VideoTensor cur = x;
  for (const auto& s : stages_)
    if (s->linear()) cur = s->forward(cur);
  return cur;
}

VideoTensor DegradationOperator::adjoint(const VideoTensor& y) const {
  if (y.shape() != output_) throw std::invalid_argument("adjoint: measurement shape mismatch");
  VideoTensor cur = y;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) cur = (*it)->adjoint(cur);
  return cur;
}

VideoTensor DegradationOperator::pseudo_apply(const VideoTensor& r) const {
  if (r.shape() != output_) throw std::invalid_argument("pseudo_apply: measurement shape mismatch");
  VideoTensor cur = r;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) cur = (*it)->pseudo(cur);
  return cur;
}

VideoTensor DegradationOperator::residual(const VideoTensor& x, const VideoTensor& y) const {
  if (y.shape() != output_) throw std::invalid_argument("residual: measurement shape mismatch");
  VideoTensor ax = is_linear() ? apply_linear(x) : apply(x);
  return ax - y;
}

std::vector<Kernel> DegradationOperator::kernels() const {
  for (const auto& s : stages_)
    if (auto* b = dynamic_cast<const detail::BlurDecimateStage*>(s.get())) return b->kernels();
  return {};
}

std::size_t DegradationOperator::total_scale() const {
  std::size_t scale = 1;
  for (const auto& s : stages_)
    if (auto* b = dynamic_cast<const detail::BlurDecimateStage*>(s.get())) scale *= b->scale();
  return scale;
}

std::vector<std::complex<double>> DegradationOperator::correction_spectrum(std::size_t frame) const {
  for (const auto& s : stages_)
    if (auto* b = dynamic_cast<const detail::BlurDecimateStage*>(s.get()))
      return b->correction(frame);
  return {};
}

VideoTensor add_noise(const VideoTensor& v, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("add_noise: sigma must be non-negative");
  VideoTensor out = v;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (double& x : out.values()) x += sigma * rng.normal();
  return out;
}

VideoTensor gaussian_smooth(const VideoTensor& v, double radius) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("gaussian_smooth: radius must be finite and non-negative");
  }
  if (radius == 0.0) return v;
  const std::size_t h = v.height(), w = v.width(), ch = v.channels();
  auto fft = detail::fft_plan(h, w);
  std::vector<double> transfer(h * w);
  const double k = 2.0 * std::numbers::pi * std::numbers::pi * radius * radius;
  for (std::size_t y = 0; y < h; ++y) {
    double fy = y <= h / 2 ? static_cast<double>(y) / static_cast<double>(h)
                           : -static_cast<double>(h - y) / static_cast<double>(h);
    for (std::size_t x = 0; x < w; ++x) {
      double fx = x <= w / 2 ? static_cast<double>(x) / static_cast<double>(w)
                             : -static_cast<double>(w - x) / static_cast<double>(w);
      transfer[y * w + x] = std::exp(-k * (fy * fy + fx * fx));
    }
  }
  VideoTensor out(v.shape());
  out.set_unclamped(v.unclamped());
  std::vector<detail::cplx> buf;
  const double norm = 1.0 / static_cast<double>(h * w);
  for (std::size_t n = 0; n < v.frames(); ++n) {
    auto dst = out.frame(n);
    for (std::size_t c = 0; c < ch; ++c) {
      detail::load_plane(v, n, c, buf);
      fft->forward(buf);
      for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= transfer[i];
      fft->inverse(buf);
      for (std::size_t p = 0; p < buf.size(); ++p) dst[p * ch + c] = buf[p].real() * norm;
    }
  }
  return out;
}

}  // namespace flair
