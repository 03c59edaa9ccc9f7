#include "flair/jpeg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace flair {

namespace {

constexpr std::array<int, 64> kLuminanceBase = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

// basis[u][x] = c(u)/2 * cos((2x+1) u pi / 16)
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      double cu = u == 0 ? 1.0 / std::numbers::sqrt2 : 1.0;
      for (int x = 0; x < 8; ++x) {
        b[u][x] = 0.5 * cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

// F = B f B^T
void forward_dct(const double* in, double* out) {
  const auto& b = dct_basis();
  double tmp[64];
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += b[u][y] * in[y * 8 + x];
      tmp[u * 8 + x] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += tmp[u * 8 + x] * b[v][x];
      out[u * 8 + v] = s;
    }
}

// f = B^T F B
void inverse_dct(const double* in, double* out) {
  const auto& b = dct_basis();
  double tmp[64];
  for (int y = 0; y < 8; ++y)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += b[u][y] * in[u * 8 + v];
      tmp[y * 8 + v] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += tmp[y * 8 + v] * b[v][x];
      out[y * 8 + x] = s;
    }
}

// Symmetric (edge-repeating) mirror index into [0, n).
std::size_t mirror_index(std::size_t i, std::size_t n) {
  std::size_t period = 2 * n;
  std::size_t m = i % period;
  return m < n ? m : period - 1 - m;
}

std::size_t round_up8(std::size_t n) { return (n + 7) / 8 * 8; }

// Model range [-1, 1] <-> level-shifted 8-bit scale [-128, 127].
double to_level_shifted(double v) { return (v + 1.0) * 127.5 - 128.0; }
double from_level_shifted(double p) { return (p + 128.0) / 127.5 - 1.0; }

}  // namespace

std::array<int, 64> JpegCodec::quality_table(int quality) {
  if (quality < 1 || quality > 100) {
    throw std::invalid_argument("JPEG quality must lie in [1, 100], got " +
                                std::to_string(quality));
  }
  int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> t{};
  for (std::size_t i = 0; i < 64; ++i) {
    int q = (kLuminanceBase[i] * scale + 50) / 100;
    t[i] = std::clamp(q, 1, 255);
  }
  return t;
}

JpegCodec::JpegCodec(int quality) : quality_(quality), table_(quality_table(quality)) {}

JpegPlane JpegCodec::encode_plane(std::span<const double> plane, std::size_t height,
                                  std::size_t width) const {
  if (plane.size() != height * width) throw std::invalid_argument("encode_plane: size mismatch");
  JpegPlane out;
  out.height = height;
  out.width = width;
  out.padded_height = round_up8(height);
  out.padded_width = round_up8(width);
  const std::size_t by = out.padded_height / 8;
  const std::size_t bx = out.padded_width / 8;
  out.coefficients.resize(by * bx * 64);

  double block[64];
  double coef[64];
  for (std::size_t j = 0; j < by; ++j) {
    for (std::size_t i = 0; i < bx; ++i) {
      for (std::size_t y = 0; y < 8; ++y) {
        std::size_t sy = mirror_index(j * 8 + y, height);
        for (std::size_t x = 0; x < 8; ++x) {
          std::size_t sx = mirror_index(i * 8 + x, width);
          block[y * 8 + x] = to_level_shifted(plane[sy * width + sx]);
        }
      }
      forward_dct(block, coef);
      std::int32_t* dst = &out.coefficients[(j * bx + i) * 64];
      for (std::size_t k = 0; k < 64; ++k) {
        dst[k] = static_cast<std::int32_t>(std::lround(coef[k] / table_[k]));
      }
    }
  }
  return out;
}

std::vector<double> JpegCodec::decode_plane(const JpegPlane& plane) const {
  const std::size_t by = plane.padded_height / 8;
  const std::size_t bx = plane.padded_width / 8;
  if (plane.coefficients.size() != by * bx * 64) {
    throw std::invalid_argument("decode_plane: coefficient count does not match padded size");
  }
  std::vector<double> out(plane.height * plane.width);
  double coef[64];
  double block[64];
  for (std::size_t j = 0; j < by; ++j) {
    for (std::size_t i = 0; i < bx; ++i) {
      const std::int32_t* src = &plane.coefficients[(j * bx + i) * 64];
      for (std::size_t k = 0; k < 64; ++k) coef[k] = static_cast<double>(src[k]) * table_[k];
      inverse_dct(coef, block);
      for (std::size_t y = 0; y < 8; ++y) {
        std::size_t py = j * 8 + y;
        if (py >= plane.height) break;
        for (std::size_t x = 0; x < 8; ++x) {
          std::size_t px = i * 8 + x;
          if (px >= plane.width) break;
          out[py * plane.width + px] = from_level_shifted(block[y * 8 + x]);
        }
      }
    }
  }
  return out;
}

JpegStream JpegCodec::encode(const VideoTensor& v) const {
  JpegStream s;
  s.shape = v.shape();
  s.quality = quality_;
  const std::size_t h = v.height(), w = v.width(), c = v.channels();
  std::vector<double> plane(h * w);
  for (std::size_t n = 0; n < v.frames(); ++n) {
    auto f = v.frame(n);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < h * w; ++p) plane[p] = f[p * c + ch];
      s.planes.push_back(encode_plane(plane, h, w));
    }
  }
  return s;
}

VideoTensor JpegCodec::decode(const JpegStream& stream) const {
  if (stream.quality != quality_) throw std::invalid_argument("decode: quality mismatch");
  const VideoShape& shape = stream.shape;
  if (stream.planes.size() != shape.frames * shape.channels) {
    throw std::invalid_argument("decode: plane count does not match shape");
  }
  VideoTensor out(shape);
  const std::size_t c = shape.channels;
  for (std::size_t n = 0; n < shape.frames; ++n) {
    auto f = out.frame(n);
    for (std::size_t ch = 0; ch < c; ++ch) {
      auto plane = decode_plane(stream.planes[n * c + ch]);
      for (std::size_t p = 0; p < plane.size(); ++p) f[p * c + ch] = plane[p];
    }
  }
  return out;
}

VideoTensor JpegCodec::round_trip(const VideoTensor& v) const { return decode(encode(v)); }

}  // namespace flair
