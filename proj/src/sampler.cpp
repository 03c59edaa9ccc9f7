#include "flair/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "flair/kernel.hpp"
#include "flair/rng.hpp"

namespace flair {

ConsistencyMode parse_consistency_mode(std::string_view name) {
  if (name == "noiseless" || name == "noiseless-eq9") return ConsistencyMode::noiseless;
  if (name == "noisy" || name == "noisy-eq10") return ConsistencyMode::noisy;
  if (name == "composite" || name == "composite-eq12") return ConsistencyMode::composite;
  throw std::invalid_argument("unknown consistency mode '" + std::string(name) + "'");
}

std::string_view to_string(ConsistencyMode mode) {
  switch (mode) {
    case ConsistencyMode::noiseless: return "noiseless";
    case ConsistencyMode::noisy: return "noisy";
    case ConsistencyMode::composite: return "composite";
  }
  return "?";
}

namespace {

// 1-D periodic cubic-convolution taps for upscaling by `scale`.
struct Taps {
  std::size_t base[4];
  double weight[4];
};

std::vector<Taps> upscale_taps(std::size_t low, std::size_t scale) {
  std::vector<Taps> taps(low * scale);
  const auto n = static_cast<long>(low);
  for (std::size_t i = 0; i < taps.size(); ++i) {
    std::size_t j = i / scale;
    double frac = static_cast<double>(i % scale) / static_cast<double>(scale);
    for (int m = -1; m <= 2; ++m) {
      long src = ((static_cast<long>(j) + m) % n + n) % n;
      taps[i].base[m + 1] = static_cast<std::size_t>(src);
      taps[i].weight[m + 1] = cubic_weight(frac - m);
    }
  }
  return taps;
}

}  // namespace

VideoTensor build_condition(const VideoTensor& y, const DegradationOperator& op) {
  if (y.shape() != op.output_shape()) {
    throw std::invalid_argument("build_condition: measurement shape does not match the operator");
  }
  const VideoShape& out_shape = op.input_shape();
  if (out_shape.height % y.height() != 0 || out_shape.width % y.width() != 0 ||
      out_shape.height / y.height() != out_shape.width / y.width()) {
    throw std::invalid_argument("build_condition: restoration grid is not an integer upscale");
  }
  const std::size_t scale = out_shape.height / y.height();
  const auto row_taps = upscale_taps(y.height(), scale);
  const auto col_taps = upscale_taps(y.width(), scale);
  const std::size_t ch = y.channels();

  VideoTensor out(out_shape);
  std::vector<double> rows(y.height() * out_shape.width * ch);
  for (std::size_t n = 0; n < y.frames(); ++n) {
    auto src = y.frame(n);
    // Horizontal pass on the low-res rows, then vertical.
    for (std::size_t r = 0; r < y.height(); ++r)
      for (std::size_t x = 0; x < out_shape.width; ++x)
        for (std::size_t c = 0; c < ch; ++c) {
          double s = 0.0;
          for (int k = 0; k < 4; ++k)
            s += col_taps[x].weight[k] * src[(r * y.width() + col_taps[x].base[k]) * ch + c];
          rows[(r * out_shape.width + x) * ch + c] = s;
        }
    auto dst = out.frame(n);
    for (std::size_t yy = 0; yy < out_shape.height; ++yy)
      for (std::size_t x = 0; x < out_shape.width; ++x)
        for (std::size_t c = 0; c < ch; ++c) {
          double s = 0.0;
          for (int k = 0; k < 4; ++k)
            s += row_taps[yy].weight[k] * rows[(row_taps[yy].base[k] * out_shape.width + x) * ch + c];
          dst[(yy * out_shape.width + x) * ch + c] = s;
        }
  }
  return clamp_model_range(out);
}

RestorationProblem::RestorationProblem(DegradationOperator op, VideoTensor measurement,
                                       std::optional<VideoTensor> mask)
    : op_(std::move(op)), y_(std::move(measurement)) {
  if (y_.shape() != op_.output_shape()) {
    throw std::invalid_argument("RestorationProblem: measurement shape does not match the operator output");
  }
  condition_ = build_condition(y_, op_);
  const VideoShape full = op_.input_shape();
  if (mask) {
    const VideoShape& m = mask->shape();
    if (m.height != full.height || m.width != full.width ||
        (m.frames != 1 && m.frames != full.frames) ||
        (m.channels != 1 && m.channels != full.channels)) {
      throw std::invalid_argument("RestorationProblem: mask shape is not broadcastable to the video");
    }
    for (double v : mask->values()) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("RestorationProblem: mask values must lie in [0, 1]");
    }
    mask_ = std::move(*mask);
  } else {
    mask_ = VideoTensor(VideoShape{1, full.height, full.width, 1}, 1.0);
  }
}

void SamplerConfig::validate() const {
  if (steps < 1 || (steps >= schedule.steps() && !(steps == 1 && schedule.steps() == 1))) {
    throw std::invalid_argument("sampler: K must lie in [1, T)");
  }
  if (!(guidance > 0.0)) throw std::invalid_argument("sampler: guidance weight must be > 0");
  if (!(eta >= 0.0)) throw std::invalid_argument("sampler: eta must be >= 0");
  if (params.tau < 0 || params.tau > steps - 1) throw std::invalid_argument("sampler: tau must lie in [0, K-1]");
  if (!(params.rho > 0.0 && params.rho <= 1.0)) throw std::invalid_argument("sampler: rho must lie in (0, 1]");
  if (!(params.w_tau >= 0.0 && params.w_tau <= 1.0)) throw std::invalid_argument("sampler: w_tau must lie in [0, 1]");
  if (!(params.zeta >= 0.0)) throw std::invalid_argument("sampler: zeta must be >= 0");
  if (!(params.sigma_e >= 0.0)) throw std::invalid_argument("sampler: sigma_e must be >= 0");
}

VideoTensor data_consistency(const VideoTensor& x0t, const RestorationProblem& problem,
                             double gamma, ConsistencyMode mode) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("data_consistency: gamma must lie in [0, 1]");
  const DegradationOperator& op = problem.op();
  if (x0t.shape() != op.input_shape()) throw std::invalid_argument("data_consistency: shape mismatch");
  if (mode != ConsistencyMode::composite && !op.is_linear()) {
    throw std::invalid_argument("data_consistency: JPEG operators need the composite mode");
  }
  if (mode == ConsistencyMode::noiseless) gamma = 1.0;
  if (gamma == 0.0) return x0t;
  VideoTensor r = op.residual(x0t, problem.measurement());
  VideoTensor out = linear_combination(1.0, x0t, -gamma, op.pseudo_apply(r));
  out.set_unclamped(true);
  return out;
}

VideoTensor enhance_blend(const VideoTensor& x, const VideoTensor& enhanced, const VideoTensor& mask,
                          double w) {
  require_same_shape(x, enhanced, "enhance_blend");
  if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("enhance_blend: w must lie in [0, 1]");
  const VideoShape& s = x.shape();
  const VideoShape& m = mask.shape();
  if (m.height != s.height || m.width != s.width || (m.frames != 1 && m.frames != s.frames) ||
      (m.channels != 1 && m.channels != s.channels)) {
    throw std::invalid_argument("enhance_blend: mask shape is not broadcastable");
  }
  if (w == 0.0) return x;
  VideoTensor out(s);
  out.set_unclamped(x.unclamped());
  for (std::size_t n = 0; n < s.frames; ++n)
    for (std::size_t yy = 0; yy < s.height; ++yy)
      for (std::size_t xx = 0; xx < s.width; ++xx)
        for (std::size_t c = 0; c < s.channels; ++c) {
          double wm = w * mask.at(m.frames == 1 ? 0 : n, yy, xx, m.channels == 1 ? 0 : c);
          out.at(n, yy, xx, c) = (1.0 - wm) * x.at(n, yy, xx, c) + wm * enhanced.at(n, yy, xx, c);
        }
  return out;
}

VideoTensor guided_epsilon(const VideoTensor& eps_cond, const VideoTensor& eps_uncond,
                           double lambda) {
  return linear_combination(lambda, eps_cond, 1.0 - lambda, eps_uncond);
}

void write_trace_csv(std::ostream& os, const std::vector<StepTrace>& trace) {
  auto old = os.precision(17);
  os << "step,t,residual_inf,w,gamma\n";
  for (const auto& s : trace) {
    os << s.step << ',' << s.t << ',' << s.residual_after_consistency << ',' << s.w << ','
       << s.gamma << '\n';
  }
  os.precision(old);
}

RestoreResult restore(const RestorationProblem& problem, Denoiser& denoiser, Enhancer& enhancer,
                      const SamplerConfig& config) {
  config.validate();
  const NoiseSchedule& sched = config.schedule;
  const TimestepPlan plan = reschedule(sched.steps(), config.steps);
  const InferenceSchedules schedules = build_schedules(plan, sched, config.params);
  const VideoShape shape = problem.restoration_shape();
  const auto k = plan.size();

  Rng rng(config.seed);
  VideoTensor x_t = rng.normal_tensor(shape);
  RestoreResult result;
  result.trace.reserve(k);

  for (std::size_t step = 0; step < k; ++step) {
    const std::size_t pos = k - 1 - step;
    const int t = schedules.t[pos];
    const int t_prev = schedules.t_prev[pos];
    try {
      VideoTensor eps_draw = rng.normal_tensor(shape);

      VideoTensor eps_hat = denoiser.predict(x_t, &problem.condition(), t, sched);
      if (config.guidance != 1.0) {
        VideoTensor eps_uncond = denoiser.predict(x_t, nullptr, t, sched);
        eps_hat = guided_epsilon(eps_hat, eps_uncond, config.guidance);
      }
      if (eps_hat.shape() != shape || !eps_hat.all_finite()) {
        throw std::runtime_error("denoiser returned a malformed or non-finite prediction");
      }

      VideoTensor x0t = predict_x0(x_t, eps_hat, t, sched);
      const double gamma =
          config.mode == ConsistencyMode::noiseless ? 1.0 : schedules.gamma[pos];
      VideoTensor x0_dc = data_consistency(x0t, problem, gamma, config.mode);

      StepTrace tr;
      tr.step = step;
      tr.t = t;
      tr.t_prev = t_prev;
      tr.gamma = gamma;
      tr.w = schedules.w[pos];
      tr.residual_after_consistency = max_abs(problem.op().residual(x0_dc, problem.measurement()));
      if (config.debug_checks && config.mode == ConsistencyMode::noiseless &&
          tr.residual_after_consistency > 1e-6) {
        throw std::runtime_error("hard projection residual " +
                                 std::to_string(tr.residual_after_consistency) + " exceeds 1e-6");
      }

      VideoTensor x0_final = x0_dc;
      if (tr.w > 0.0) {
        VideoTensor enhanced = enhancer.enhance(x0_dc);
        if (enhanced.shape() != shape || !enhanced.all_finite()) {
          throw std::runtime_error("enhancer returned a malformed or non-finite output");
        }
        x0_final = enhance_blend(x0_dc, enhanced, problem.mask(), tr.w);
        tr.residual_after_blend = max_abs(problem.op().residual(x0_final, problem.measurement()));
      } else {
        tr.residual_after_blend = tr.residual_after_consistency;
      }
      result.trace.push_back(tr);

      if (t_prev == 0) {
        result.restored = clamp_model_range(x0_final);
        break;
      }
      if (config.update == ReverseUpdate::noisy) {
        x_t = noisy_step(x_t, x0_final, t, t_prev, schedules.rho[pos], eps_draw, sched);
      } else {
        VideoTensor eps_tilde = recompute_epsilon(x_t, x0_final, t, sched);
        x_t = ddim_step(x0_final, eps_tilde, t, t_prev, config.eta, &eps_draw, sched);
      }
    } catch (const SamplerError&) {
      throw;
    } catch (const std::exception& e) {
      throw SamplerError(step, t, e.what());
    }
  }
  return result;
}

}  // namespace flair
