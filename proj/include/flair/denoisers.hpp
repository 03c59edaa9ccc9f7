#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include "flair/schedule.hpp"
#include "flair/video.hpp"

namespace flair {

/// Raised when an external backend violates the wire protocol or dies.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::uint64_t request_id, const std::string& what)
      : std::runtime_error("request " + std::to_string(request_id) + ": " + what),
        request_id_(request_id) {}
  std::uint64_t request_id() const { return request_id_; }

 private:
  std::uint64_t request_id_;
};

/// eps-predictor boundary. `condition` is null for the unconditional branch
/// of classifier-free guidance.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual VideoTensor predict(const VideoTensor& x_t, const VideoTensor* condition, int t,
                              const NoiseSchedule& sched) = 0;
};

/// Spatial enhancer G.
class Enhancer {
 public:
  virtual ~Enhancer() = default;
  virtual VideoTensor enhance(const VideoTensor& x) = 0;
};

/// Returns the exact noise under the forward marginal for a known clean video.
class OracleDenoiser final : public Denoiser {
 public:
  explicit OracleDenoiser(VideoTensor truth) : truth_(std::move(truth)) {}
  VideoTensor predict(const VideoTensor& x_t, const VideoTensor* condition, int t,
                      const NoiseSchedule& sched) override;

 private:
  VideoTensor truth_;
};

class ZeroDenoiser final : public Denoiser {
 public:
  VideoTensor predict(const VideoTensor& x_t, const VideoTensor* condition, int t,
                      const NoiseSchedule& sched) override;
};

/// Analytic stand-in for a trained predictor: x0_hat is x_t / sqrt(ab_t)
/// smoothed with radius strength * sqrt(1 - ab_t) / sqrt(ab_t), and eps is
/// the noise consistent with that estimate.
class ShrinkageDenoiser final : public Denoiser {
 public:
  explicit ShrinkageDenoiser(double strength);
  VideoTensor predict(const VideoTensor& x_t, const VideoTensor* condition, int t,
                      const NoiseSchedule& sched) override;
  double strength() const { return strength_; }

  /// The x0 estimate behind predict().
  VideoTensor estimate_x0(const VideoTensor& x_t, int t, const NoiseSchedule& sched) const;

 private:
  double strength_;
};

class IdentityEnhancer final : public Enhancer {
 public:
  VideoTensor enhance(const VideoTensor& x) override { return x; }
};

/// G(x) = clamp(x + amount (x - smooth(x, radius))).
class UnsharpEnhancer final : public Enhancer {
 public:
  UnsharpEnhancer(double amount, double radius);
  VideoTensor enhance(const VideoTensor& x) override;

 private:
  double amount_;
  double radius_;
};

namespace detail {
class ChildProcess;
}

/// Talks to an external model over the child's stdin/stdout.
///
/// Request (little-endian): "FLDN" | id u64 | t u32 | null-condition u8 |
/// N H W C u32 | x_t f32[] | c f32[]. The condition payload is always sent
/// (zeros when null-condition is set). Response: "FLEP" | id u64 | eps f32[].
class SubprocessDenoiser final : public Denoiser {
 public:
  explicit SubprocessDenoiser(const std::string& command);
  ~SubprocessDenoiser() override;
  VideoTensor predict(const VideoTensor& x_t, const VideoTensor* condition, int t,
                      const NoiseSchedule& sched) override;

 private:
  std::unique_ptr<detail::ChildProcess> child_;
  std::uint64_t next_id_ = 1;
};

/// Enhancer over the same transport: "FLEN" | id | N H W C | x f32[] ->
/// "FLEO" | id | G(x) f32[].
class SubprocessEnhancer final : public Enhancer {
 public:
  explicit SubprocessEnhancer(const std::string& command);
  ~SubprocessEnhancer() override;
  VideoTensor enhance(const VideoTensor& x) override;

 private:
  std::unique_ptr<detail::ChildProcess> child_;
  std::uint64_t next_id_ = 1;
};

}  // namespace flair
