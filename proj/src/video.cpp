#include "flair/video.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"

namespace flair {

namespace fs = std::filesystem;
using detail::read_le;
using detail::write_le;

VideoTensor::VideoTensor(VideoShape shape, double fill)
    : shape_(shape), data_(shape.size(), fill) {}

VideoTensor::VideoTensor(VideoShape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw std::invalid_argument("VideoTensor: payload has " + std::to_string(data_.size()) +
                                " values, shape requires " + std::to_string(shape_.size()));
  }
}

std::span<const double> VideoTensor::frame(std::size_t n) const {
  return std::span<const double>(data_).subspan(n * shape_.frame_size(), shape_.frame_size());
}

std::span<double> VideoTensor::frame(std::size_t n) {
  return std::span<double>(data_).subspan(n * shape_.frame_size(), shape_.frame_size());
}

bool VideoTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const VideoTensor& a, const VideoTensor& b, std::string_view what) {
  if (a.shape() != b.shape()) {
    auto fmt = [](const VideoShape& s) {
      return std::to_string(s.frames) + "x" + std::to_string(s.height) + "x" +
             std::to_string(s.width) + "x" + std::to_string(s.channels);
    };
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + fmt(a.shape()) +
                                " vs " + fmt(b.shape()));
  }
}

VideoTensor linear_combination(double a, const VideoTensor& x, double b, const VideoTensor& y) {
  require_same_shape(x, y, "linear_combination");
  VideoTensor out(x.shape());
  auto o = out.values();
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xv[i] + b * yv[i];
  out.set_unclamped(x.unclamped() || y.unclamped());
  return out;
}

VideoTensor operator+(const VideoTensor& a, const VideoTensor& b) {
  return linear_combination(1.0, a, 1.0, b);
}

VideoTensor operator-(const VideoTensor& a, const VideoTensor& b) {
  return linear_combination(1.0, a, -1.0, b);
}

VideoTensor operator*(double s, const VideoTensor& a) {
  VideoTensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

double max_abs(const VideoTensor& v) {
  double m = 0.0;
  for (double x : v.values()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const VideoTensor& a, const VideoTensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double dot(const VideoTensor& a, const VideoTensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

VideoTensor clamp_model_range(const VideoTensor& v) {
  VideoTensor out = v;
  for (double& x : out.values()) x = std::clamp(x, -1.0, 1.0);
  out.set_unclamped(false);
  return out;
}

VideoFormat parse_video_format(std::string_view name) {
  if (name == "vten") return VideoFormat::vten;
  if (name == "png" || name == "png-sequence") return VideoFormat::png_sequence;
  throw std::invalid_argument("unknown video format '" + std::string(name) + "'");
}

std::uint8_t model_to_byte(double v) {
  double scaled = (std::clamp(v, -1.0, 1.0) + 1.0) * 127.5;
  return static_cast<std::uint8_t>(std::min(255.0, std::floor(scaled + 0.5)));
}

double byte_to_model(std::uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

namespace {

constexpr char kVtenMagic[4] = {'V', 'T', 'E', 'N'};
constexpr std::uint32_t kVtenVersion = 1;

VideoTensor read_vten(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kVtenMagic)) {
    throw std::runtime_error(path.string() + ": bad vten magic");
  }
  auto version = read_le<std::uint32_t>(is, "vten version");
  if (version != kVtenVersion) {
    throw std::runtime_error(path.string() + ": unsupported vten version " +
                             std::to_string(version));
  }
  VideoShape shape;
  shape.frames = read_le<std::uint32_t>(is, "vten header");
  shape.height = read_le<std::uint32_t>(is, "vten header");
  shape.width = read_le<std::uint32_t>(is, "vten header");
  shape.channels = read_le<std::uint32_t>(is, "vten header");
  if (shape.channels != 1 && shape.channels != 3) {
    throw std::runtime_error(path.string() + ": channel count must be 1 or 3");
  }
  std::vector<double> data(shape.size());
  for (double& v : data) {
    v = read_le<double>(is, path.string() + " payload");
    if (!std::isfinite(v)) throw std::runtime_error(path.string() + ": non-finite payload value");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error(path.string() + ": trailing bytes after payload");
  }
  return VideoTensor(shape, std::move(data));
}

void write_vten(const VideoTensor& v, const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kVtenMagic, 4);
  write_le<std::uint32_t>(os, kVtenVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(v.frames()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(v.height()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(v.width()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(v.channels()));
  for (double x : v.values()) write_le<double>(os, x);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

std::string frame_name(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.png", n);
  return buf;
}

VideoTensor read_png_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (std::size_t n = 0;; ++n) {
    fs::path p = dir / frame_name(n);
    if (!fs::exists(p)) break;
    files.push_back(p);
  }
  if (files.empty()) throw std::runtime_error(dir.string() + ": no frame_00000.png found");

  VideoShape shape;
  shape.frames = files.size();
  std::vector<double> data;
  for (std::size_t n = 0; n < files.size(); ++n) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, files[n].c_str())) {
      throw std::runtime_error(files[n].string() + ": " + image.message);
    }
    std::size_t channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (n == 0) {
      shape.height = image.height;
      shape.width = image.width;
      shape.channels = channels;
      data.reserve(shape.size());
    } else if (image.height != shape.height || image.width != shape.width ||
               channels != shape.channels) {
      png_image_free(&image);
      throw std::runtime_error(files[n].string() + ": frame dimensions differ from frame 0");
    }
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
      throw std::runtime_error(files[n].string() + ": " + image.message);
    }
    for (png_byte b : buf) data.push_back(byte_to_model(b));
  }
  return VideoTensor(shape, std::move(data));
}

void write_png_sequence(const VideoTensor& v, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<png_byte> buf(v.shape().frame_size());
  for (std::size_t n = 0; n < v.frames(); ++n) {
    auto f = v.frame(n);
    std::transform(f.begin(), f.end(), buf.begin(), model_to_byte);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(v.width());
    image.height = static_cast<png_uint_32>(v.height());
    image.format = v.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    fs::path p = dir / frame_name(n);
    if (!png_image_write_to_file(&image, p.c_str(), 0, buf.data(), 0, nullptr)) {
      throw std::runtime_error(p.string() + ": " + image.message);
    }
  }
}

}  // namespace

VideoTensor read_video(const fs::path& path, VideoFormat format) {
  return format == VideoFormat::vten ? read_vten(path) : read_png_sequence(path);
}

VideoTensor read_video(const fs::path& path) {
  return read_video(path, fs::is_directory(path) ? VideoFormat::png_sequence : VideoFormat::vten);
}

void write_video(const VideoTensor& v, const fs::path& path, VideoFormat format) {
  if (v.channels() != 1 && v.channels() != 3) {
    throw std::invalid_argument("write_video: channel count must be 1 or 3");
  }
  if (format == VideoFormat::vten) {
    write_vten(v, path);
  } else {
    write_png_sequence(v, path);
  }
}

// ---------------------------------------------------------------------------
// Flow fields

FlowField FlowField::uniform(std::size_t pairs, std::size_t height, std::size_t width, double u,
                             double v) {
  FlowField f;
  f.pairs = pairs;
  f.height = height;
  f.width = width;
  f.displacement.resize(2 * f.pixel_count());
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    f.displacement[2 * i] = static_cast<float>(u);
    f.displacement[2 * i + 1] = static_cast<float>(v);
  }
  f.recompute_valid_mask();
  return f;
}

void FlowField::recompute_valid_mask() {
  valid.assign(pixel_count(), 0);
  for (std::size_t p = 0; p < pairs; ++p) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        std::size_t i = (p * height + y) * width + x;
        double sx = static_cast<double>(x) + displacement[2 * i];
        double sy = static_cast<double>(y) + displacement[2 * i + 1];
        valid[i] = sx >= 0.0 && sy >= 0.0 && sx <= static_cast<double>(width - 1) &&
                   sy <= static_cast<double>(height - 1);
      }
    }
  }
}

namespace {
constexpr char kFlowMagic[4] = {'F', 'L', 'O', 'W'};
}

FlowField read_flow(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kFlowMagic)) {
    throw std::runtime_error(path.string() + ": bad flow magic");
  }
  FlowField f;
  f.pairs = read_le<std::uint32_t>(is, "flow header");
  f.height = read_le<std::uint32_t>(is, "flow header");
  f.width = read_le<std::uint32_t>(is, "flow header");
  f.displacement.resize(2 * f.pixel_count());
  for (float& d : f.displacement) {
    d = read_le<float>(is, "flow payload");
    if (!std::isfinite(d)) throw std::runtime_error(path.string() + ": non-finite displacement");
  }
  f.valid.resize(f.pixel_count());
  if (!is.read(reinterpret_cast<char*>(f.valid.data()), static_cast<std::streamsize>(f.valid.size()))) {
    throw std::runtime_error(path.string() + ": truncated validity mask");
  }
  return f;
}

void write_flow(const FlowField& flow, const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kFlowMagic, 4);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(flow.pairs));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(flow.height));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(flow.width));
  for (float d : flow.displacement) write_le<float>(os, d);
  os.write(reinterpret_cast<const char*>(flow.valid.data()), static_cast<std::streamsize>(flow.valid.size()));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace flair
