#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "flair/video.hpp"

namespace flair {

/// Discrete forward-noising schedule over steps t = 1..T.
/// alpha_bar(0) is defined as 1 (the clean endpoint).
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const;

  const std::vector<double>& betas() const { return betas_; }

 private:
  void check(int t) const;

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;  // alpha_bars_[t], with alpha_bars_[0] = 1
};

/// Linearly spaced betas from beta1 (t = 1) to betaT (t = T), inclusive.
NoiseSchedule linear_schedule(int steps, double beta1, double betaT);

/// sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
VideoTensor forward_sample(const VideoTensor& x0, int t, const VideoTensor& eps,
                           const NoiseSchedule& sched);

/// (x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t).
VideoTensor predict_x0(const VideoTensor& x_t, const VideoTensor& eps_pred, int t,
                       const NoiseSchedule& sched);

/// Generalized beta between two plan steps: 1 - ab_t / ab_prev.
double step_beta(const NoiseSchedule& sched, int t, int t_prev);

/// DDIM update
///   x_prev = sqrt(ab_prev) x0t + sqrt(1 - ab_prev)(sqrt(1 - eta_t) eps_t + sqrt(eta_t) eps)
/// with eta_t = eta * sigma_t^2 / (1 - ab_prev) and sigma_t^2 the posterior
/// variance (1 - ab_prev)/(1 - ab_t) * step_beta. `eps_draw` is only read
/// when eta > 0; t_prev = 0 denotes the clean endpoint.
VideoTensor ddim_step(const VideoTensor& x0t, const VideoTensor& eps_t, int t, int t_prev,
                      double eta, const VideoTensor* eps_draw, const NoiseSchedule& sched);

/// (x_t - sqrt(ab_t) x0) / sqrt(1 - ab_t).
VideoTensor recompute_epsilon(const VideoTensor& x_t, const VideoTensor& x0, int t,
                              const NoiseSchedule& sched);

/// Noisy-measurement reverse update
///   eps~  = (x_t - sqrt(ab_t) x~0t) / sqrt(1 - ab_t)
///   x_prev = sqrt(ab_prev) x~0t + sqrt(1 - ab_t)(sqrt(1 - rho) eps~ + sqrt(rho) eps)
VideoTensor noisy_step(const VideoTensor& x_t, const VideoTensor& x0t_corrected, int t, int t_prev,
                       double rho, const VideoTensor& eps_draw, const NoiseSchedule& sched);

/// Rescheduled timesteps, stored in sampling order (first entry near T).
struct TimestepPlan {
  std::vector<int> steps;

  std::size_t size() const { return steps.size(); }
  /// Timestep at plan position p; position K-1 is the first sampled step.
  int at_position(std::size_t p) const { return steps[steps.size() - 1 - p]; }
  /// Timestep that follows position p in the reverse process (0 after position 0).
  int previous_of_position(std::size_t p) const { return p == 0 ? 0 : at_position(p - 1); }
};

/// K evenly spaced reals over [1, T], rounded to the nearest integer.
/// Collisions after rounding push the later (smaller) entry down one step.
TimestepPlan reschedule(int steps, int count);

/// Per-plan-position inference coefficients, indexed by position p in
/// [0, K-1] (p = K-1 is sampled first).
struct InferenceSchedules {
  std::vector<int> t;
  std::vector<int> t_prev;
  std::vector<double> gamma;
  std::vector<double> rho;
  std::vector<double> w;
  std::vector<double> sigma_total;
};

struct ScheduleParams {
  double zeta = 0.0;
  double sigma_e = 0.0;  // model-range units
  double rho = 0.85;
  double w_tau = 0.0;
  int tau = 0;
};

/// gamma = clip(1 - zeta sigma_e^2 ab_t / ab_prev, 0, 1)
/// w     = exp(-(p - tau)/(K - tau)) w_tau for p >= tau, else 0
/// sigma = sqrt(ab_prev gamma^2 sigma_e^2 + rho)
InferenceSchedules build_schedules(const TimestepPlan& plan, const NoiseSchedule& sched,
                                   const ScheduleParams& params);

/// Writes the CSV dump: t,beta,alpha_bar,gamma,rho,w,sigma_total, one row per
/// plan step in sampling order.
void write_schedule_csv(std::ostream& os, const NoiseSchedule& sched,
                        const InferenceSchedules& schedules);

/// eps-prediction callback used by loss_eval: (x_t, condition, t) -> eps_hat.
using EpsilonFn = std::function<VideoTensor(const VideoTensor&, const VideoTensor&, int)>;

/// Monte Carlo estimate of E ||eps - eps_hat(x_t, c, t)||^2 with one
/// (t, eps) draw per seed. Diagnostic only.
double loss_eval(const EpsilonFn& denoiser, const VideoTensor& x0, const VideoTensor& condition,
                 const NoiseSchedule& sched, std::span<const std::uint64_t> seeds);

}  // namespace flair
