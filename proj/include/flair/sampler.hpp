#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "flair/degrade.hpp"
#include "flair/denoisers.hpp"
#include "flair/schedule.hpp"
#include "flair/video.hpp"

namespace flair {

/// How the x0 estimate is pulled back toward the measurements.
enum class ConsistencyMode {
  noiseless,  // hard projection: x - A^+(A x - y)
  noisy,      // scaled projection: x - gamma_t A^+(A x - y)
  composite,  // residual routed through JPEG: x - gamma_t A^+ D(E(A x) - y)
};

ConsistencyMode parse_consistency_mode(std::string_view name);
std::string_view to_string(ConsistencyMode mode);

/// Up-scaled measurement used as the denoiser condition: periodic
/// cubic-convolution interpolation of y onto the restoration grid (low-res
/// sample j sits at fine pixel j * s), clamped to [-1, 1].
VideoTensor build_condition(const VideoTensor& y, const DegradationOperator& op);

/// Everything known about one restoration instance.
class RestorationProblem {
 public:
  /// `mask` defaults to all ones; it may have one channel (broadcast) or
  /// match the restoration channels, and one frame or N frames.
  RestorationProblem(DegradationOperator op, VideoTensor measurement,
                     std::optional<VideoTensor> mask = {});

  const DegradationOperator& op() const { return op_; }
  const VideoTensor& measurement() const { return y_; }
  const VideoTensor& condition() const { return condition_; }
  const VideoTensor& mask() const { return mask_; }
  VideoShape restoration_shape() const { return op_.input_shape(); }

 private:
  DegradationOperator op_;
  VideoTensor y_;
  VideoTensor condition_;
  VideoTensor mask_;
};

/// Reverse update after the corrected x0 estimate: the rho-parameterized
/// noisy update (default) or a plain DDIM step driven by eta.
enum class ReverseUpdate { noisy, ddim };

struct SamplerConfig {
  NoiseSchedule schedule = linear_schedule(1000, 1e-4, 0.02);
  int steps = 25;  // K
  ScheduleParams params;
  double guidance = 1.0;  // lambda; 1 disables the unconditional branch
  double eta = 0.0;
  std::uint64_t seed = 0;
  ConsistencyMode mode = ConsistencyMode::noiseless;
  ReverseUpdate update = ReverseUpdate::noisy;
  /// Throws if a hard projection misses the measurements by more than 1e-6.
  bool debug_checks = false;

  void validate() const;
};

/// x - gamma A^+ r with r the mode's residual. noiseless forces gamma = 1.
VideoTensor data_consistency(const VideoTensor& x0t, const RestorationProblem& problem,
                             double gamma, ConsistencyMode mode);

/// (1 - w m) x + w m G(x), element-wise.
VideoTensor enhance_blend(const VideoTensor& x, const VideoTensor& enhanced, const VideoTensor& mask,
                          double w);

/// lambda eps_cond + (1 - lambda) eps_uncond.
VideoTensor guided_epsilon(const VideoTensor& eps_cond, const VideoTensor& eps_uncond,
                           double lambda);

/// Failure inside the sampling loop, tagged with the loop iteration.
class SamplerError : public std::runtime_error {
 public:
  SamplerError(std::size_t step, int t, const std::string& what)
      : std::runtime_error("sampling step " + std::to_string(step) + " (t=" + std::to_string(t) +
                           "): " + what),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct StepTrace {
  std::size_t step = 0;  // loop iteration, 0 first
  int t = 0;
  int t_prev = 0;
  double residual_after_consistency = 0.0;  // ||A x~0t - y||_inf (mode residual)
  double residual_after_blend = 0.0;
  double w = 0.0;
  double gamma = 0.0;
};

/// step,t,residual_inf,w,gamma
void write_trace_csv(std::ostream& os, const std::vector<StepTrace>& trace);

struct RestoreResult {
  VideoTensor restored;
  std::vector<StepTrace> trace;
};

/// Conditional iterative refinement. Draw order from the seeded generator:
/// x_T first, then one fresh noise tensor per step before the denoiser call.
/// Per step: guided eps -> x0t -> data consistency -> enhancement blend ->
/// recomputed eps -> noisy reverse update. The final step returns the
/// blended x0 estimate, clamped to the model range.
RestoreResult restore(const RestorationProblem& problem, Denoiser& denoiser, Enhancer& enhancer,
                      const SamplerConfig& config);

}  // namespace flair
