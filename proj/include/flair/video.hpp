#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace flair {

/// Shape of a frame sequence: N frames of H x W pixels with C channels.
struct VideoShape {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t frame_size() const { return height * width * channels; }
  std::size_t size() const { return frames * frame_size(); }

  friend bool operator==(const VideoShape&, const VideoShape&) = default;
};

/// N x H x W x C sequence of real values, stored row-major frame by frame
/// (channel fastest). Values live in the model range [-1, 1] unless the
/// tensor is flagged as an unclamped diffusion state.
class VideoTensor {
 public:
  VideoTensor() = default;
  explicit VideoTensor(VideoShape shape, double fill = 0.0);
  VideoTensor(VideoShape shape, std::vector<double> data);

  static VideoTensor zeros_like(const VideoTensor& other) {
    return VideoTensor(other.shape());
  }

  const VideoShape& shape() const { return shape_; }
  std::size_t frames() const { return shape_.frames; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::span<const double> frame(std::size_t n) const;
  std::span<double> frame(std::size_t n);

  double& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c = 0) {
    return data_[index(n, y, x, c)];
  }
  double at(std::size_t n, std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data_[index(n, y, x, c)];
  }

  /// Diffusion states (x_t, x_0t) may leave [-1, 1]; this flag records it.
  bool unclamped() const { return unclamped_; }
  void set_unclamped(bool v) { unclamped_ = v; }

  bool all_finite() const;

  friend bool operator==(const VideoTensor& a, const VideoTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t index(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
    return ((n * shape_.height + y) * shape_.width + x) * shape_.channels + c;
  }

  VideoShape shape_;
  std::vector<double> data_;
  bool unclamped_ = false;
};

// Element-wise helpers used throughout the sampler.
VideoTensor operator+(const VideoTensor& a, const VideoTensor& b);
VideoTensor operator-(const VideoTensor& a, const VideoTensor& b);
VideoTensor operator*(double s, const VideoTensor& a);

/// a*x + b*y, element-wise.
VideoTensor linear_combination(double a, const VideoTensor& x, double b, const VideoTensor& y);

double max_abs(const VideoTensor& v);
double max_abs_diff(const VideoTensor& a, const VideoTensor& b);
double dot(const VideoTensor& a, const VideoTensor& b);

void require_same_shape(const VideoTensor& a, const VideoTensor& b, std::string_view what);

/// Clamps every value to [-1, 1]. Idempotent.
VideoTensor clamp_model_range(const VideoTensor& v);

enum class VideoFormat { vten, png_sequence };

VideoFormat parse_video_format(std::string_view name);

/// Reads a tensor. vten files are read verbatim; png sequences are mapped
/// from [0, 255] to the model range via v / 127.5 - 1.
VideoTensor read_video(const std::filesystem::path& path, VideoFormat format);

/// Writes a tensor. png output clamps to [-1, 1] and quantizes with
/// round((v + 1) * 127.5), halves rounded up.
void write_video(const VideoTensor& v, const std::filesystem::path& path, VideoFormat format);

/// Picks the format from the path: directories are png sequences.
VideoTensor read_video(const std::filesystem::path& path);

std::uint8_t model_to_byte(double v);
double byte_to_model(std::uint8_t b);

/// Per-pixel displacement from frame n to n+1 plus a validity mask.
struct FlowField {
  std::size_t pairs = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> displacement;  // (u, v) per pixel, u horizontal
  std::vector<std::uint8_t> valid;  // one byte per pixel

  std::size_t pixel_count() const { return pairs * height * width; }

  /// Uniform translation flow with the in-bounds validity mask.
  static FlowField uniform(std::size_t pairs, std::size_t height, std::size_t width, double u,
                           double v);

  /// Recomputes the validity mask: a pixel is valid iff its displaced
  /// source lies inside the frame.
  void recompute_valid_mask();
};

FlowField read_flow(const std::filesystem::path& path);
void write_flow(const FlowField& flow, const std::filesystem::path& path);

}  // namespace flair
