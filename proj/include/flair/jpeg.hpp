#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flair/video.hpp"

namespace flair {

/// Quantized 8x8 block-DCT coefficients of one image plane. Planes whose
/// sides are not multiples of 8 are mirror-padded before the transform;
/// `height`/`width` keep the original size for decoding.
struct JpegPlane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t padded_height = 0;
  std::size_t padded_width = 0;
  std::vector<std::int32_t> coefficients;  // block-major, 64 per block, row-major inside

  friend bool operator==(const JpegPlane&, const JpegPlane&) = default;
};

/// Coefficient stream for a whole video: one plane per (frame, channel).
struct JpegStream {
  VideoShape shape;
  int quality = 0;
  std::vector<JpegPlane> planes;

  friend bool operator==(const JpegStream&, const JpegStream&) = default;
};

/// Baseline-JPEG surrogate: level shift, orthonormal 8x8 DCT-II and
/// rounding against the quality-scaled luminance table. No chroma
/// subsampling and no entropy coding. decode() dequantizes and inverts the
/// DCT without re-rounding pixels, so encode(decode(encode(x))) == encode(x).
class JpegCodec {
 public:
  explicit JpegCodec(int quality);

  int quality() const { return quality_; }
  const std::array<int, 64>& table() const { return table_; }

  /// Luminance table scaled by the IJG rule (Annex K base table).
  static std::array<int, 64> quality_table(int quality);

  /// `plane` holds model-range values, row-major H x W.
  JpegPlane encode_plane(std::span<const double> plane, std::size_t height,
                         std::size_t width) const;
  std::vector<double> decode_plane(const JpegPlane& plane) const;

  JpegStream encode(const VideoTensor& v) const;
  VideoTensor decode(const JpegStream& stream) const;

  /// decode(encode(v)).
  VideoTensor round_trip(const VideoTensor& v) const;

 private:
  int quality_;
  std::array<int, 64> table_;
};

}  // namespace flair
