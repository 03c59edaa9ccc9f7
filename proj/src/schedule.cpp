#include "flair/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "flair/rng.hpp"

namespace flair {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("NoiseSchedule: need at least one step");
  alpha_bars_.resize(betas_.size() + 1);
  alpha_bars_[0] = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    double b = betas_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("NoiseSchedule: beta_" + std::to_string(i + 1) +
                                  " outside (0, 1)");
    }
    alpha_bars_[i + 1] = alpha_bars_[i] * (1.0 - b);
  }
}

void NoiseSchedule::check(int t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check(t);
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  check(t);
  return alpha_bars_[static_cast<std::size_t>(t)];
}

NoiseSchedule linear_schedule(int steps, double beta1, double betaT) {
  if (steps < 1) throw std::invalid_argument("linear_schedule: T must be positive");
  if (!(beta1 > 0.0 && beta1 <= betaT && betaT < 1.0)) {
    throw std::invalid_argument("linear_schedule: need 0 < beta1 <= betaT < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (steps == 1) {
    betas[0] = beta1;
  } else {
    for (int i = 0; i < steps; ++i) {
      betas[static_cast<std::size_t>(i)] =
          beta1 + (betaT - beta1) * static_cast<double>(i) / static_cast<double>(steps - 1);
    }
    betas.back() = betaT;
  }
  return NoiseSchedule(std::move(betas));
}

VideoTensor forward_sample(const VideoTensor& x0, int t, const VideoTensor& eps,
                           const NoiseSchedule& sched) {
  double ab = sched.alpha_bar(t);
  if (t < 1) throw std::out_of_range("forward_sample: t must be >= 1");
  VideoTensor out = linear_combination(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
  out.set_unclamped(true);
  return out;
}

VideoTensor predict_x0(const VideoTensor& x_t, const VideoTensor& eps_pred, int t,
                       const NoiseSchedule& sched) {
  double ab = sched.alpha_bar(t);
  double inv = 1.0 / std::sqrt(ab);
  VideoTensor out = linear_combination(inv, x_t, -std::sqrt(1.0 - ab) * inv, eps_pred);
  out.set_unclamped(true);
  return out;
}

double step_beta(const NoiseSchedule& sched, int t, int t_prev) {
  return 1.0 - sched.alpha_bar(t) / sched.alpha_bar(t_prev);
}

VideoTensor ddim_step(const VideoTensor& x0t, const VideoTensor& eps_t, int t, int t_prev,
                      double eta, const VideoTensor* eps_draw, const NoiseSchedule& sched) {
  if (t_prev >= t) throw std::invalid_argument("ddim_step: t_prev must be < t");
  if (!(eta >= 0.0)) throw std::invalid_argument("ddim_step: eta must be non-negative");
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t_prev);
  const double one_minus_prev = 1.0 - ab_prev;

  double eta_t = 0.0;
  if (eta > 0.0 && one_minus_prev > 0.0) {
    double posterior_var = one_minus_prev / (1.0 - ab) * step_beta(sched, t, t_prev);
    eta_t = eta * posterior_var / one_minus_prev;
    if (eta_t > 1.0) {
      throw std::invalid_argument("ddim_step: eta_t = " + std::to_string(eta_t) + " exceeds 1");
    }
  }

  VideoTensor out = linear_combination(std::sqrt(ab_prev), x0t,
                                       std::sqrt(one_minus_prev) * std::sqrt(1.0 - eta_t), eps_t);
  if (eta_t > 0.0) {
    if (!eps_draw) throw std::invalid_argument("ddim_step: eta > 0 requires a noise draw");
    out = linear_combination(1.0, out, std::sqrt(one_minus_prev) * std::sqrt(eta_t), *eps_draw);
  }
  out.set_unclamped(true);
  return out;
}

VideoTensor recompute_epsilon(const VideoTensor& x_t, const VideoTensor& x0, int t,
                              const NoiseSchedule& sched) {
  double ab = sched.alpha_bar(t);
  double inv = 1.0 / std::sqrt(1.0 - ab);
  VideoTensor out = linear_combination(inv, x_t, -std::sqrt(ab) * inv, x0);
  out.set_unclamped(true);
  return out;
}

VideoTensor noisy_step(const VideoTensor& x_t, const VideoTensor& x0t_corrected, int t, int t_prev,
                       double rho, const VideoTensor& eps_draw, const NoiseSchedule& sched) {
  if (t_prev >= t) throw std::invalid_argument("noisy_step: t_prev must be < t");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("noisy_step: rho must lie in [0, 1]");
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t_prev);
  VideoTensor eps_tilde = recompute_epsilon(x_t, x0t_corrected, t, sched);
  const double scale = std::sqrt(1.0 - ab);
  VideoTensor noise = linear_combination(std::sqrt(1.0 - rho), eps_tilde, std::sqrt(rho), eps_draw);
  VideoTensor out = linear_combination(std::sqrt(ab_prev), x0t_corrected, scale, noise);
  out.set_unclamped(true);
  return out;
}

TimestepPlan reschedule(int steps, int count) {
  if (count < 1) throw std::invalid_argument("reschedule: K must be >= 1");
  if (count >= steps && !(count == 1 && steps == 1)) {
    throw std::invalid_argument("reschedule: K must be < T");
  }
  TimestepPlan plan;
  plan.steps.resize(static_cast<std::size_t>(count));
  if (count == 1) {
    plan.steps[0] = steps;
    return plan;
  }
  for (int i = 0; i < count; ++i) {
    // Sampling order: i = 0 is the largest timestep.
    double v = static_cast<double>(steps) -
               static_cast<double>(i) * static_cast<double>(steps - 1) / static_cast<double>(count - 1);
    plan.steps[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(v));
  }
  for (std::size_t i = 1; i < plan.steps.size(); ++i) {
    if (plan.steps[i] >= plan.steps[i - 1]) plan.steps[i] = plan.steps[i - 1] - 1;
    if (plan.steps[i] < 1) throw std::logic_error("reschedule: collision pushed a step below 1");
  }
  return plan;
}

InferenceSchedules build_schedules(const TimestepPlan& plan, const NoiseSchedule& sched,
                                   const ScheduleParams& params) {
  const int k = static_cast<int>(plan.size());
  if (k == 0) throw std::invalid_argument("build_schedules: empty plan");
  if (!(params.zeta >= 0.0)) throw std::invalid_argument("build_schedules: zeta must be >= 0");
  if (!(params.sigma_e >= 0.0)) throw std::invalid_argument("build_schedules: sigma_e must be >= 0");
  if (params.tau < 0 || params.tau > k - 1) {
    throw std::invalid_argument("build_schedules: tau must lie in [0, K-1]");
  }
  if (!(params.w_tau >= 0.0 && params.w_tau <= 1.0)) {
    throw std::invalid_argument("build_schedules: w_tau must lie in [0, 1]");
  }
  if (!(params.rho > 0.0 && params.rho <= 1.0)) {
    throw std::invalid_argument("build_schedules: rho must lie in (0, 1]");
  }

  InferenceSchedules s;
  const double var_e = params.sigma_e * params.sigma_e;
  for (int p = 0; p < k; ++p) {
    const auto pos = static_cast<std::size_t>(p);
    int t = plan.at_position(pos);
    int t_prev = plan.previous_of_position(pos);
    double ab = sched.alpha_bar(t);
    double ab_prev = sched.alpha_bar(t_prev);
    double gamma = std::clamp(1.0 - params.zeta * var_e * ab / ab_prev, 0.0, 1.0);
    double w = p >= params.tau
                   ? std::exp(-static_cast<double>(p - params.tau) / static_cast<double>(k - params.tau)) *
                         params.w_tau
                   : 0.0;
    s.t.push_back(t);
    s.t_prev.push_back(t_prev);
    s.gamma.push_back(gamma);
    s.rho.push_back(params.rho);
    s.w.push_back(w);
    s.sigma_total.push_back(std::sqrt(ab_prev * gamma * gamma * var_e + params.rho));
  }
  return s;
}

void write_schedule_csv(std::ostream& os, const NoiseSchedule& sched,
                        const InferenceSchedules& s) {
  auto old_precision = os.precision(17);
  os << "t,beta,alpha_bar,gamma,rho,w,sigma_total\n";
  for (std::size_t i = s.t.size(); i-- > 0;) {
    int t = s.t[i];
    os << t << ',' << sched.beta(t) << ',' << sched.alpha_bar(t) << ',' << s.gamma[i] << ','
       << s.rho[i] << ',' << s.w[i] << ',' << s.sigma_total[i] << '\n';
  }
  os.precision(old_precision);
}

double loss_eval(const EpsilonFn& denoiser, const VideoTensor& x0, const VideoTensor& condition,
                 const NoiseSchedule& sched, std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw std::invalid_argument("loss_eval: need at least one seed");
  double total = 0.0;
  for (std::uint64_t seed : seeds) {
    Rng rng(seed);
    int t = 1 + static_cast<int>(rng.uniform() * sched.steps());
    t = std::min(t, sched.steps());
    VideoTensor eps = rng.normal_tensor(x0.shape());
    VideoTensor x_t = forward_sample(x0, t, eps, sched);
    VideoTensor eps_hat = denoiser(x_t, condition, t);
    require_same_shape(eps, eps_hat, "loss_eval");
    double sq = 0.0;
    for (std::size_t i = 0; i < eps.size(); ++i) {
      double d = eps.data()[i] - eps_hat.data()[i];
      sq += d * d;
    }
    total += sq;
  }
  return total / static_cast<double>(seeds.size());
}

}  // namespace flair
