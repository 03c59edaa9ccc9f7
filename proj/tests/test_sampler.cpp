#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "flair/degrade.hpp"
#include "flair/kernel.hpp"
#include "flair/rng.hpp"
#include "flair/sampler.hpp"
#include "flair/synthetic.hpp"
#include "test_util.hpp"

using namespace flair;

namespace {

// Keys cubic, a = -0.5
double keys(double x) {
  x = std::abs(x);
  if (x <= 1) return 1.5 * x * x * x - 2.5 * x * x + 1;
  if (x < 2) return -0.5 * x * x * x + 2.5 * x * x - 4 * x + 2;
  return 0;
}

VideoTensor cubic_upscale_oracle(const VideoTensor& y, std::size_t s) {
  const long h = static_cast<long>(y.height()), w = static_cast<long>(y.width());
  VideoTensor out({y.frames(), y.height() * s, y.width() * s, y.channels()});
  for (std::size_t n = 0; n < y.frames(); ++n)
    for (std::size_t i = 0; i < out.height(); ++i)
      for (std::size_t j = 0; j < out.width(); ++j)
        for (std::size_t c = 0; c < y.channels(); ++c) {
          const long bi = static_cast<long>(i / s), bj = static_cast<long>(j / s);
          const double fi = static_cast<double>(i % s) / s, fj = static_cast<double>(j % s) / s;
          double v = 0;
          for (long m = -1; m <= 2; ++m)
            for (long q = -1; q <= 2; ++q)
              v += keys(fi - m) * keys(fj - q) *
                   y.at(n, static_cast<std::size_t>(((bi + m) % h + h) % h),
                        static_cast<std::size_t>(((bj + q) % w + w) % w), c);
          out.at(n, i, j, c) = std::clamp(v, -1.0, 1.0);
        }
  return out;
}

DegradationOperator sr_op(const VideoShape& shape, std::size_t s) {
  return DegradationOperator::blur_decimate(shape, {make_bicubic_kernel(s)}, s);
}

VideoTensor smooth_video(std::size_t frames, std::size_t side, std::uint64_t seed) {
  SmoothMotionParams p;
  p.frames = frames;
  p.height = side;
  p.width = side;
  p.seed = seed;
  return make_smooth_motion_video(p);
}

}  // namespace

TEST_CASE("condition is the periodic cubic upscale of y") {
  SUBCASE("random measurements") {
    for (std::size_t s : {1u, 2u, 4u}) {
      VideoTensor y = test::random_video({2, 5, 6, 2}, s, 0.9);
      VideoShape full{2, 5 * s, 6 * s, 2};
      auto op = DegradationOperator::blur_decimate(full, {Kernel::delta(1)}, s);
      CHECK(max_abs_diff(build_condition(y, op), cubic_upscale_oracle(y, s)) < 1e-14);
    }
  }
  SUBCASE("delta on a 4x4 grid upscaled to 16x16") {
    VideoTensor y({1, 4, 4, 1});
    y.at(0, 1, 2) = 1.0;
    auto op = DegradationOperator::blur_decimate({1, 16, 16, 1}, {Kernel::delta(1)}, 4);
    VideoTensor c = build_condition(y, op);
    CHECK(c.at(0, 4, 8) == 1.0);
    CHECK(c.at(0, 4, 10) == doctest::Approx(0.5625));
    CHECK(c.at(0, 6, 10) == doctest::Approx(0.5625 * 0.5625));
    CHECK(c.at(0, 0, 8) == 0.0);
    CHECK(c.at(0, 4, 4) == 0.0);
    CHECK(c.at(0, 4, 5) == doctest::Approx(keys(0.75)));
    CHECK(c.at(0, 4, 1) == doctest::Approx(keys(1.75)));
  }
  SUBCASE("identity operator returns y") {
    VideoTensor y = test::random_video({1, 4, 4, 1}, 3);
    CHECK(build_condition(y, DegradationOperator::identity(y.shape())) == y);
  }
}

TEST_CASE("data consistency") {
  VideoShape shape{1, 8, 8, 1};
  VideoTensor x = test::random_video(shape, 1);
  VideoTensor y = test::random_video(shape, 2);
  SUBCASE("identity operator interpolates toward y") {
    RestorationProblem prob(DegradationOperator::identity(shape), y);
    VideoTensor got = data_consistency(x, prob, 0.25, ConsistencyMode::noisy);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(got.data()[i] == doctest::Approx(0.75 * x.data()[i] + 0.25 * y.data()[i]).epsilon(1e-14));
    CHECK(data_consistency(x, prob, 0.0, ConsistencyMode::noisy) == x);
    CHECK(max_abs_diff(data_consistency(x, prob, 0.0, ConsistencyMode::noiseless), y) < 1e-15);
    CHECK_THROWS(data_consistency(x, prob, 1.5, ConsistencyMode::noisy));
  }
  SUBCASE("hard projection splits into range and null parts") {
    VideoShape full{2, 16, 16, 1};
    auto op = sr_op(full, 4);
    VideoTensor truth = test::random_video(full, 3, 0.5);
    VideoTensor meas = op.apply(truth);
    RestorationProblem prob(op, meas);
    VideoTensor guess = test::random_video(full, 4, 0.5);
    VideoTensor proj = data_consistency(guess, prob, 1.0, ConsistencyMode::noiseless);
    CHECK(max_abs(op.residual(proj, meas)) < 1e-10);
    // null-space component untouched: (I - A+A) proj == (I - A+A) guess
    auto null_part = [&](const VideoTensor& v) { return v - op.pseudo_apply(op.apply_linear(v)); };
    CHECK(max_abs_diff(null_part(proj), null_part(guess)) < 1e-10);
    // range component equals A+ y
    CHECK(max_abs_diff(op.pseudo_apply(op.apply_linear(proj)), op.pseudo_apply(meas)) < 1e-10);
  }
  SUBCASE("composite residual goes through the JPEG roundtrip") {
    auto op = DegradationOperator::jpeg(shape, 90);
    VideoTensor meas = op.apply(y);
    RestorationProblem prob(op, meas);
    VideoTensor got = data_consistency(x, prob, 0.5, ConsistencyMode::composite);
    VideoTensor expect = x - 0.5 * (op.apply(x) - meas);
    CHECK(max_abs_diff(got, expect) < 1e-12);
    CHECK_THROWS(data_consistency(x, prob, 0.5, ConsistencyMode::noisy));
  }
}

TEST_CASE("enhancement blend and guidance") {
  VideoShape shape{2, 3, 3, 2};
  VideoTensor x = test::random_video(shape, 1);
  VideoTensor g = test::random_video(shape, 2);
  VideoTensor mask({1, 3, 3, 1}, 1.0);
  mask.at(0, 1, 1) = 0.0;
  mask.at(0, 0, 2) = 0.5;
  VideoTensor out = enhance_blend(x, g, mask, 0.4);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < 2; ++c) {
          double wm = 0.4 * mask.at(0, i, j);
          CHECK(out.at(n, i, j, c) == doctest::Approx((1 - wm) * x.at(n, i, j, c) + wm * g.at(n, i, j, c)));
        }
  CHECK(out.at(1, 1, 1, 1) == x.at(1, 1, 1, 1));
  CHECK(enhance_blend(x, g, mask, 0.0) == x);
  CHECK(max_abs_diff(enhance_blend(x, g, VideoTensor({1, 3, 3, 1}, 1.0), 1.0), g) == 0.0);
  CHECK_THROWS(enhance_blend(x, g, mask, 1.2));
  CHECK_THROWS(enhance_blend(x, g, VideoTensor({1, 2, 3, 1}, 1.0), 0.5));

  VideoTensor e = guided_epsilon(x, g, 3.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(e.data()[i] == doctest::Approx(3.0 * x.data()[i] - 2.0 * g.data()[i]));
  CHECK(guided_epsilon(x, g, 1.0) == x);
}

TEST_CASE("oracle restoration recovers the clean video for any K") {
  VideoTensor truth = smooth_video(3, 32, 5);
  struct Case {
    const char* name;
    DegradationOperator op;
  };
  std::vector<Case> cases = {
      {"sr4", sr_op(truth.shape(), 4)},
      {"sr8", sr_op(truth.shape(), 8)},
      {"deblur", DegradationOperator::blur_decimate(truth.shape(), {make_gaussian_kernel(25, 2, 2, 0)}, 1)},
  };
  for (const auto& cs : cases) {
    RestorationProblem prob(cs.op, cs.op.apply(truth));
    for (int k : {1, 5, 25}) {
      CAPTURE(cs.name);
      CAPTURE(k);
      SamplerConfig cfg;
      cfg.steps = k;
      cfg.seed = 9;
      OracleDenoiser d(truth);
      IdentityEnhancer g;
      RestoreResult r = restore(prob, d, g, cfg);
      CHECK(r.trace.size() == static_cast<std::size_t>(k));
      CHECK(max_abs_diff(r.restored, truth) < 1e-6);
    }
  }
}

TEST_CASE("restoration is deterministic and checks hard projections") {
  VideoTensor truth = smooth_video(2, 16, 3);
  auto op = sr_op(truth.shape(), 4);
  RestorationProblem prob(op, op.apply(truth));
  SamplerConfig cfg;
  cfg.steps = 10;
  cfg.seed = 4;
  cfg.debug_checks = true;
  cfg.params.w_tau = 0.5;
  cfg.params.tau = 2;
  ShrinkageDenoiser d(1.0);
  UnsharpEnhancer g(0.5, 1.0);
  RestoreResult a = restore(prob, d, g, cfg);
  RestoreResult b = restore(prob, d, g, cfg);
  CHECK(a.restored == b.restored);
  for (const auto& tr : a.trace) CHECK(tr.residual_after_consistency <= 1e-6);
  cfg.seed = 5;
  CHECK_FALSE(restore(prob, d, g, cfg).restored == a.restored);
}

TEST_CASE("trace follows the schedules") {
  VideoTensor truth = smooth_video(1, 16, 4);
  auto op = sr_op(truth.shape(), 2).with_noise(0.05);
  RestorationProblem prob(op, op.apply(truth, 1));
  SamplerConfig cfg;
  cfg.steps = 20;
  cfg.params = ScheduleParams{100.0, 0.05, 0.5, 0.8, 4};
  cfg.mode = ConsistencyMode::noisy;
  ShrinkageDenoiser d(1.0);
  UnsharpEnhancer g(1.0, 1.0);
  RestoreResult r = restore(prob, d, g, cfg);
  InferenceSchedules sc = build_schedules(reschedule(1000, 20), cfg.schedule, cfg.params);
  REQUIRE(r.trace.size() == 20);
  for (std::size_t step = 0; step < 20; ++step) {
    const auto& tr = r.trace[step];
    CHECK(tr.step == step);
    CHECK(tr.t == sc.t[19 - step]);
    CHECK(tr.t_prev == sc.t_prev[19 - step]);
    CHECK(tr.w == sc.w[19 - step]);
    CHECK(tr.gamma == sc.gamma[19 - step]);
  }
  CHECK(r.trace.back().t_prev == 0);
  std::ostringstream os;
  write_trace_csv(os, r.trace);
  std::string s = os.str();
  CHECK(s.rfind("step,t,residual_inf,w,gamma\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 21);
}

TEST_CASE("disabled consistency and enhancement reduce to the plain reverse chain") {
  // gamma == 0 through a huge zeta, w == 0 through w_tau = 0
  VideoTensor truth = smooth_video(1, 16, 6);
  auto op = sr_op(truth.shape(), 2).with_noise(0.1);
  RestorationProblem prob(op, op.apply(truth, 2));
  SamplerConfig cfg;
  cfg.steps = 8;
  cfg.seed = 21;
  cfg.mode = ConsistencyMode::noisy;
  cfg.params = ScheduleParams{1e12, 0.1, 0.6, 0.0, 0};
  ShrinkageDenoiser d(0.7);
  UnsharpEnhancer g(1.0, 1.0);
  RestoreResult r = restore(prob, d, g, cfg);

  InferenceSchedules sc = build_schedules(reschedule(1000, 8), cfg.schedule, cfg.params);
  for (double gm : sc.gamma) REQUIRE(gm == 0.0);
  Rng rng(21);
  VideoTensor x = rng.normal_tensor(truth.shape());
  VideoTensor manual;
  for (std::size_t step = 0; step < 8; ++step) {
    const std::size_t pos = 7 - step;
    VideoTensor draw = rng.normal_tensor(truth.shape());
    VideoTensor eps = d.predict(x, &prob.condition(), sc.t[pos], cfg.schedule);
    VideoTensor x0 = predict_x0(x, eps, sc.t[pos], cfg.schedule);
    if (sc.t_prev[pos] == 0) {
      manual = clamp_model_range(x0);
      break;
    }
    x = noisy_step(x, x0, sc.t[pos], sc.t_prev[pos], 0.6, draw, cfg.schedule);
  }
  CHECK(r.restored == manual);
}

TEST_CASE("ddim update path") {
  VideoTensor truth = smooth_video(1, 16, 7);
  auto op = sr_op(truth.shape(), 4);
  RestorationProblem prob(op, op.apply(truth));
  SamplerConfig cfg;
  cfg.steps = 10;
  cfg.update = ReverseUpdate::ddim;
  cfg.eta = 0.5;
  OracleDenoiser d(truth);
  IdentityEnhancer g;
  CHECK(max_abs_diff(restore(prob, d, g, cfg).restored, truth) < 1e-6);
}

TEST_CASE("guided restoration calls the unconditional branch") {
  VideoTensor truth = smooth_video(1, 8, 8);
  RestorationProblem prob(DegradationOperator::identity(truth.shape()), truth);
  struct Counting : Denoiser {
    int cond = 0, uncond = 0;
    VideoTensor predict(const VideoTensor& x, const VideoTensor* c, int, const NoiseSchedule&) override {
      (c ? cond : uncond)++;
      return VideoTensor(x.shape());
    }
  } d;
  IdentityEnhancer g;
  SamplerConfig cfg;
  cfg.steps = 6;
  restore(prob, d, g, cfg);
  CHECK(d.cond == 6);
  CHECK(d.uncond == 0);
  cfg.guidance = 2.0;
  restore(prob, d, g, cfg);
  CHECK(d.cond == 12);
  CHECK(d.uncond == 6);
}

TEST_CASE("sampler config validation") {
  SamplerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.steps = 1000;
  CHECK_THROWS(cfg.validate());
  cfg = SamplerConfig{};
  cfg.params.rho = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = SamplerConfig{};
  cfg.params.tau = 25;
  CHECK_THROWS(cfg.validate());
  cfg = SamplerConfig{};
  cfg.guidance = 0.0;
  CHECK_THROWS(cfg.validate());
  CHECK(parse_consistency_mode("noisy") == ConsistencyMode::noisy);
  CHECK(to_string(ConsistencyMode::composite) == "composite");
  CHECK_THROWS(parse_consistency_mode("bogus"));
}

TEST_CASE("non-finite predictions abort with the step") {
  VideoTensor truth = smooth_video(1, 8, 9);
  RestorationProblem prob(DegradationOperator::identity(truth.shape()), truth);
  struct Bad : Denoiser {
    int calls = 0;
    VideoTensor predict(const VideoTensor& x, const VideoTensor*, int, const NoiseSchedule&) override {
      VideoTensor out(x.shape());
      if (++calls == 3) out.values()[0] = std::nan("");
      return out;
    }
  } d;
  IdentityEnhancer g;
  SamplerConfig cfg;
  cfg.steps = 5;
  try {
    restore(prob, d, g, cfg);
    FAIL("expected a sampler error");
  } catch (const SamplerError& e) {
    CHECK(e.step() == 2);
  }
}
