#include "flair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace flair {

namespace {

double to_unit(double v) { return (v + 1.0) * 0.5; }

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    double d = i - c;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace

std::vector<double> psnr(const VideoTensor& a, const VideoTensor& b) {
  require_same_shape(a, b, "psnr");
  std::vector<double> out;
  out.reserve(a.frames());
  for (std::size_t n = 0; n < a.frames(); ++n) {
    auto fa = a.frame(n);
    auto fb = b.frame(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) {
      double d = to_unit(fa[i]) - to_unit(fb[i]);
      sq += d * d;
    }
    double mse = sq / static_cast<double>(fa.size());
    out.push_back(mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse));
  }
  return out;
}

std::vector<double> ssim(const VideoTensor& a, const VideoTensor& b, const SsimParams& p) {
  require_same_shape(a, b, "ssim");
  const auto win = static_cast<std::size_t>(p.window);
  if (a.height() < win || a.width() < win) {
    throw std::invalid_argument("ssim: frame " + std::to_string(a.height()) + "x" +
                                std::to_string(a.width()) + " is smaller than the " +
                                std::to_string(win) + "x" + std::to_string(win) + " window");
  }
  const auto g = gaussian_window(p.window, p.sigma);
  const double c1 = p.k1 * p.k1;  // data range 1
  const double c2 = p.k2 * p.k2;
  const std::size_t h = a.height(), w = a.width(), ch = a.channels();
  const std::size_t oh = h - win + 1, ow = w - win + 1;

  // Separable weighted sums of x, y, x^2, y^2, xy over valid windows.
  auto filter = [&](const std::vector<double>& img) {
    std::vector<double> tmp(h * ow);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < win; ++k) s += g[k] * img[y * w + x + k];
        tmp[y * ow + x] = s;
      }
    std::vector<double> out(oh * ow);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < win; ++k) s += g[k] * tmp[(y + k) * ow + x];
        out[y * ow + x] = s;
      }
    return out;
  };

  std::vector<double> result;
  std::vector<double> xa(h * w), xb(h * w), xaa(h * w), xbb(h * w), xab(h * w);
  for (std::size_t n = 0; n < a.frames(); ++n) {
    auto fa = a.frame(n);
    auto fb = b.frame(n);
    double frame_total = 0.0;
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < h * w; ++i) {
        xa[i] = to_unit(fa[i * ch + c]);
        xb[i] = to_unit(fb[i * ch + c]);
        xaa[i] = xa[i] * xa[i];
        xbb[i] = xb[i] * xb[i];
        xab[i] = xa[i] * xb[i];
      }
      auto mu_a = filter(xa), mu_b = filter(xb);
      auto s_aa = filter(xaa), s_bb = filter(xbb), s_ab = filter(xab);
      double total = 0.0;
      for (std::size_t i = 0; i < mu_a.size(); ++i) {
        double ma = mu_a[i], mb = mu_b[i];
        double va = s_aa[i] - ma * ma;
        double vb = s_bb[i] - mb * mb;
        double cov = s_ab[i] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
      frame_total += total / static_cast<double>(mu_a.size());
    }
    result.push_back(frame_total / static_cast<double>(ch));
  }
  return result;
}

double warping_error(const VideoTensor& v, const FlowField& flow) {
  if (v.frames() < 2) throw std::invalid_argument("warping_error: need at least two frames");
  if (flow.pairs != v.frames() - 1 || flow.height != v.height() || flow.width != v.width()) {
    throw std::invalid_argument("warping_error: flow has " + std::to_string(flow.pairs) +
                                " pairs of " + std::to_string(flow.height) + "x" +
                                std::to_string(flow.width) + ", video needs " +
                                std::to_string(v.frames() - 1) + " pairs");
  }
  const std::size_t h = v.height(), w = v.width(), ch = v.channels();
  double total = 0.0;
  for (std::size_t p = 0; p < flow.pairs; ++p) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        std::size_t i = (p * h + y) * w + x;
        if (!flow.valid[i]) continue;
        double sx = static_cast<double>(x) + flow.displacement[2 * i];
        double sy = static_cast<double>(y) + flow.displacement[2 * i + 1];
        if (sx < 0.0 || sy < 0.0 || sx > static_cast<double>(w - 1) || sy > static_cast<double>(h - 1)) {
          continue;
        }
        auto x0 = static_cast<std::size_t>(std::floor(sx));
        auto y0 = static_cast<std::size_t>(std::floor(sy));
        std::size_t x1 = std::min(x0 + 1, w - 1);
        std::size_t y1 = std::min(y0 + 1, h - 1);
        double fx = sx - static_cast<double>(x0);
        double fy = sy - static_cast<double>(y0);
        double err = 0.0;
        for (std::size_t c = 0; c < ch; ++c) {
          double warped = (1 - fy) * ((1 - fx) * v.at(p + 1, y0, x0, c) + fx * v.at(p + 1, y0, x1, c)) +
                          fy * ((1 - fx) * v.at(p + 1, y1, x0, c) + fx * v.at(p + 1, y1, x1, c));
          double d = to_unit(v.at(p, y, x, c)) - to_unit(warped);
          err += d * d;
        }
        sum += err;
        ++count;
      }
    }
    if (count == 0) throw std::invalid_argument("warping_error: empty validity mask for pair " + std::to_string(p));
    total += sum / static_cast<double>(count);
  }
  return total / static_cast<double>(flow.pairs);
}

MetricReport evaluate(const VideoTensor& restored, const VideoTensor& reference, const FlowField* flow) {
  MetricReport r;
  r.psnr = psnr(restored, reference);
  r.ssim = ssim(restored, reference);
  r.mean_psnr = std::accumulate(r.psnr.begin(), r.psnr.end(), 0.0) / static_cast<double>(r.psnr.size());
  r.mean_ssim = std::accumulate(r.ssim.begin(), r.ssim.end(), 0.0) / static_cast<double>(r.ssim.size());
  if (flow) r.e_warp = warping_error(restored, *flow);
  return r;
}

}  // namespace flair
