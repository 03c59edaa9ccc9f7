#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "flair/degrade.hpp"
#include "flair/denoisers.hpp"
#include "flair/jpeg.hpp"
#include "flair/kernel.hpp"
#include "flair/metrics.hpp"
#include "flair/sampler.hpp"
#include "flair/schedule.hpp"
#include "flair/synthetic.hpp"
#include "flair/video.hpp"
#include "run_config.hpp"

namespace py = pybind11;
using namespace flair;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (N, H, W, C) array <-> tensor; 3-D input is read as a single channel.
VideoTensor to_tensor(const Array& a) {
  if (a.ndim() != 3 && a.ndim() != 4) throw std::invalid_argument("expected an (N, H, W[, C]) array");
  VideoShape s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
               static_cast<std::size_t>(a.shape(2)), a.ndim() == 4 ? static_cast<std::size_t>(a.shape(3)) : 1};
  VideoTensor v(s, std::vector<double>(a.data(), a.data() + a.size()));
  v.set_unclamped(true);
  return v;
}

Array to_array(const VideoTensor& v) {
  Array out({v.frames(), v.height(), v.width(), v.channels()});
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

VideoShape to_shape(const std::vector<std::size_t>& dims) {
  if (dims.size() != 3 && dims.size() != 4) throw std::invalid_argument("shape must be (N, H, W[, C])");
  return {dims[0], dims[1], dims[2], dims.size() == 4 ? dims[3] : 1};
}

Kernel to_kernel(const Array& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw std::invalid_argument("kernel must be a square 2-D array");
  return Kernel(static_cast<std::size_t>(a.shape(0)), std::vector<double>(a.data(), a.data() + a.size()));
}

Array kernel_array(const Kernel& k) {
  Array out({k.size(), k.size()});
  std::copy(k.weights().begin(), k.weights().end(), out.mutable_data());
  return out;
}

FlowField to_flow(const Array& disp, std::optional<py::array_t<std::uint8_t>> valid) {
  if (disp.ndim() != 4 || disp.shape(3) != 2) throw std::invalid_argument("flow must be (P, H, W, 2)");
  FlowField f;
  f.pairs = static_cast<std::size_t>(disp.shape(0));
  f.height = static_cast<std::size_t>(disp.shape(1));
  f.width = static_cast<std::size_t>(disp.shape(2));
  f.displacement.assign(disp.data(), disp.data() + disp.size());
  if (valid) {
    if (static_cast<std::size_t>(valid->size()) != f.pixel_count()) throw std::invalid_argument("mask size mismatch");
    f.valid.assign(valid->data(), valid->data() + valid->size());
  } else {
    f.valid.assign(f.pixel_count(), 1);
    f.recompute_valid_mask();
  }
  return f;
}

// Python callables as denoiser / enhancer backends.
class PyDenoiser final : public Denoiser {
 public:
  explicit PyDenoiser(py::function fn) : fn_(std::move(fn)) {}
  VideoTensor predict(const VideoTensor& x_t, const VideoTensor* c, int t, const NoiseSchedule&) override {
    py::gil_scoped_acquire gil;
    py::object cond = c ? py::object(to_array(*c)) : py::none();
    VideoTensor out = to_tensor(fn_(to_array(x_t), cond, t).cast<Array>());
    if (out.shape() != x_t.shape()) throw std::runtime_error("python denoiser returned the wrong shape");
    return out;
  }

 private:
  py::function fn_;
};

class PyEnhancer final : public Enhancer {
 public:
  explicit PyEnhancer(py::function fn) : fn_(std::move(fn)) {}
  VideoTensor enhance(const VideoTensor& x) override {
    py::gil_scoped_acquire gil;
    VideoTensor out = to_tensor(fn_(to_array(x)).cast<Array>());
    if (out.shape() != x.shape()) throw std::runtime_error("python enhancer returned the wrong shape");
    return out;
  }

 private:
  py::function fn_;
};

std::unique_ptr<Denoiser> make_denoiser(const py::object& spec, const std::optional<Array>& truth, double strength) {
  if (py::isinstance<py::function>(spec)) return std::make_unique<PyDenoiser>(spec.cast<py::function>());
  const auto name = spec.cast<std::string>();
  if (name == "oracle") {
    if (!truth) throw std::invalid_argument("the oracle denoiser needs truth=");
    return std::make_unique<OracleDenoiser>(to_tensor(*truth));
  }
  if (name == "zero") return std::make_unique<ZeroDenoiser>();
  if (name == "shrinkage") return std::make_unique<ShrinkageDenoiser>(strength);
  if (name.rfind("cmd:", 0) == 0) return std::make_unique<SubprocessDenoiser>(name.substr(4));
  throw std::invalid_argument("unknown denoiser '" + name + "'");
}

std::unique_ptr<Enhancer> make_enhancer(const py::object& spec, double amount, double radius) {
  if (py::isinstance<py::function>(spec)) return std::make_unique<PyEnhancer>(spec.cast<py::function>());
  const auto name = spec.cast<std::string>();
  if (name == "identity") return std::make_unique<IdentityEnhancer>();
  if (name == "unsharp") return std::make_unique<UnsharpEnhancer>(amount, radius);
  if (name.rfind("cmd:", 0) == 0) return std::make_unique<SubprocessEnhancer>(name.substr(4));
  throw std::invalid_argument("unknown enhancer '" + name + "'");
}

int run_command(const std::string& command, const std::filesystem::path& config) {
  auto cfg = cli::RunConfig::load(config);
  if (command == "degrade") return cli::cmd_degrade(cfg);
  if (command == "restore") return cli::cmd_restore(cfg);
  if (command == "evaluate") return cli::cmd_evaluate(cfg);
  if (command == "schedule") return cli::cmd_schedule(cfg);
  throw cli::ConfigError("unknown command '" + command + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Diffusion-prior video restoration core";

  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);
  py::register_exception<SamplerError>(m, "SamplerError", PyExc_RuntimeError);
  py::register_exception<cli::ConfigError>(m, "ConfigError", PyExc_ValueError);

  // video io
  m.def("read_video", [](const std::filesystem::path& p) { return to_array(read_video(p)); }, py::arg("path"));
  m.def(
      "write_video",
      [](const Array& v, const std::filesystem::path& p, const std::string& format) {
        write_video(to_tensor(v), p, parse_video_format(format));
      },
      py::arg("video"), py::arg("path"), py::arg("format") = "vten");
  m.def("clamp", [](const Array& v) { return to_array(clamp_model_range(to_tensor(v))); }, py::arg("video"));

  // kernels
  m.def("gaussian_kernel",
        [](std::size_t size, double sx, double sy, double theta) {
          return kernel_array(make_gaussian_kernel(size, sx, sy, theta));
        },
        py::arg("size"), py::arg("sigma_x"), py::arg("sigma_y"), py::arg("theta") = 0.0);
  m.def("motion_kernel",
        [](std::size_t size, std::uint64_t seed, double intensity) {
          return kernel_array(make_motion_kernel(size, seed, intensity));
        },
        py::arg("size"), py::arg("seed"), py::arg("intensity") = 0.5);
  m.def("bicubic_kernel", [](std::size_t s) { return kernel_array(make_bicubic_kernel(s)); }, py::arg("scale"));

  // operators
  py::class_<DegradationOperator>(m, "Operator")
      .def_static("identity", [](const std::vector<std::size_t>& shape) {
        return DegradationOperator::identity(to_shape(shape));
      }, py::arg("shape"))
      .def_static(
          "blur_decimate",
          [](const std::vector<std::size_t>& shape, const std::vector<Array>& kernels, std::size_t scale) {
            std::vector<Kernel> ks;
            for (const auto& k : kernels) ks.push_back(to_kernel(k));
            return DegradationOperator::blur_decimate(to_shape(shape), std::move(ks), scale);
          },
          py::arg("shape"), py::arg("kernels"), py::arg("scale"))
      .def_static("jpeg", [](const std::vector<std::size_t>& shape, int q) {
        return DegradationOperator::jpeg(to_shape(shape), q);
      }, py::arg("shape"), py::arg("quality"))
      .def_static("compose", [](const std::vector<DegradationOperator>& ops) {
        return DegradationOperator::compose(ops);
      }, py::arg("ops"))
      .def("with_noise", &DegradationOperator::with_noise, py::arg("sigma"))
      .def_property_readonly("noise_sigma", &DegradationOperator::noise_sigma)
      .def_property_readonly("is_linear", &DegradationOperator::is_linear)
      .def_property_readonly("input_shape", [](const DegradationOperator& op) {
        const auto& s = op.input_shape();
        return py::make_tuple(s.frames, s.height, s.width, s.channels);
      })
      .def_property_readonly("output_shape", [](const DegradationOperator& op) {
        const auto& s = op.output_shape();
        return py::make_tuple(s.frames, s.height, s.width, s.channels);
      })
      .def("apply", [](const DegradationOperator& op, const Array& x, std::optional<std::uint64_t> seed) {
        return to_array(op.apply(to_tensor(x), seed));
      }, py::arg("x"), py::arg("noise_seed") = py::none())
      .def("apply_linear", [](const DegradationOperator& op, const Array& x) {
        return to_array(op.apply_linear(to_tensor(x)));
      }, py::arg("x"))
      .def("adjoint", [](const DegradationOperator& op, const Array& y) {
        return to_array(op.adjoint(to_tensor(y)));
      }, py::arg("y"))
      .def("pseudo_apply", [](const DegradationOperator& op, const Array& r) {
        return to_array(op.pseudo_apply(to_tensor(r)));
      }, py::arg("r"))
      .def("residual", [](const DegradationOperator& op, const Array& x, const Array& y) {
        return to_array(op.residual(to_tensor(x), to_tensor(y)));
      }, py::arg("x"), py::arg("y"));

  m.def("jpeg_round_trip", [](const Array& v, int q) { return to_array(JpegCodec(q).round_trip(to_tensor(v))); },
        py::arg("video"), py::arg("quality"));

  // schedules
  m.def(
      "schedules",
      [](int T, double beta1, double betaT, int K, double zeta, double sigma_e, double rho, double w_tau, int tau) {
        NoiseSchedule s = linear_schedule(T, beta1, betaT);
        InferenceSchedules sc = build_schedules(reschedule(T, K), s, ScheduleParams{zeta, sigma_e, rho, w_tau, tau});
        std::vector<double> ab;
        for (int t : sc.t) ab.push_back(s.alpha_bar(t));
        py::dict d;
        d["t"] = sc.t;
        d["t_prev"] = sc.t_prev;
        d["alpha_bar"] = ab;
        d["gamma"] = sc.gamma;
        d["rho"] = sc.rho;
        d["w"] = sc.w;
        d["sigma_total"] = sc.sigma_total;
        return d;
      },
      "Per-position inference coefficients (position 0 is sampled last).", py::arg("T"), py::arg("beta_1"),
      py::arg("beta_T"), py::arg("steps"), py::arg("zeta") = 0.0, py::arg("sigma_e") = 0.0, py::arg("rho") = 0.85,
      py::arg("w_tau") = 0.0, py::arg("tau") = 0);
  m.def("reschedule", [](int T, int K) { return reschedule(T, K).steps; }, py::arg("T"), py::arg("steps"));

  // restoration
  m.def(
      "restore",
      [](const DegradationOperator& op, const Array& y, const py::object& denoiser, const py::object& enhancer,
         std::optional<Array> truth, double strength, double unsharp_amount, double unsharp_radius, int T,
         double beta1, double betaT, int K, double rho, double zeta, double w_tau, int tau, double guidance,
         double eta, std::uint64_t seed, const std::string& mode, const std::string& update,
         std::optional<Array> mask) {
        std::optional<VideoTensor> m;
        if (mask) m = to_tensor(*mask);
        RestorationProblem prob(op, to_tensor(y), m);
        auto d = make_denoiser(denoiser, truth, strength);
        auto g = make_enhancer(enhancer, unsharp_amount, unsharp_radius);
        SamplerConfig cfg;
        cfg.schedule = linear_schedule(T, beta1, betaT);
        cfg.steps = K;
        cfg.params = ScheduleParams{zeta, op.noise_sigma(), rho, w_tau, tau};
        cfg.guidance = guidance;
        cfg.eta = eta;
        cfg.seed = seed;
        cfg.mode = mode.empty() ? (op.is_linear() ? (op.noise_sigma() > 0 ? ConsistencyMode::noisy
                                                                           : ConsistencyMode::noiseless)
                                                  : ConsistencyMode::composite)
                                : parse_consistency_mode(mode);
        if (update == "ddim") {
          cfg.update = ReverseUpdate::ddim;
        } else if (update != "noisy") {
          throw std::invalid_argument("update must be 'noisy' or 'ddim'");
        }
        RestoreResult r;
        {
          py::gil_scoped_release release;
          r = restore(prob, *d, *g, cfg);
        }
        py::list trace;
        for (const auto& s : r.trace) {
          py::dict row;
          row["step"] = s.step;
          row["t"] = s.t;
          row["t_prev"] = s.t_prev;
          row["residual_after_consistency"] = s.residual_after_consistency;
          row["residual_after_blend"] = s.residual_after_blend;
          row["w"] = s.w;
          row["gamma"] = s.gamma;
          trace.append(row);
        }
        return py::make_tuple(to_array(r.restored), trace);
      },
      "Returns (restored, trace). denoiser/enhancer take a name, 'cmd:<command>' or a callable.", py::arg("op"),
      py::arg("y"), py::arg("denoiser") = "shrinkage", py::arg("enhancer") = "identity", py::arg("truth") = py::none(),
      py::arg("strength") = 1.0, py::arg("unsharp_amount") = 1.0, py::arg("unsharp_radius") = 1.0,
      py::arg("T") = 1000, py::arg("beta_1") = 1e-4, py::arg("beta_T") = 0.02, py::arg("steps") = 25,
      py::arg("rho") = 0.85, py::arg("zeta") = 0.0, py::arg("w_tau") = 0.0, py::arg("tau") = 0,
      py::arg("guidance") = 1.0, py::arg("eta") = 0.0, py::arg("seed") = 0, py::arg("mode") = "",
      py::arg("update") = "noisy", py::arg("mask") = py::none());
  m.def("condition", [](const DegradationOperator& op, const Array& y) {
    return to_array(build_condition(to_tensor(y), op));
  }, py::arg("op"), py::arg("y"));

  // metrics
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_tensor(a), to_tensor(b)); }, py::arg("a"),
        py::arg("b"));
  m.def("ssim", [](const Array& a, const Array& b) { return ssim(to_tensor(a), to_tensor(b)); }, py::arg("a"),
        py::arg("b"));
  m.def("warping_error",
        [](const Array& v, const Array& flow, std::optional<py::array_t<std::uint8_t>> valid) {
          return warping_error(to_tensor(v), to_flow(flow, std::move(valid)));
        },
        py::arg("video"), py::arg("flow"), py::arg("valid") = py::none());
  m.def("metrics_csv",
        [](const Array& restored, const Array& reference) {
          std::ostringstream os;
          cli::write_metrics_csv(os, evaluate(to_tensor(restored), to_tensor(reference)));
          return os.str();
        },
        py::arg("restored"), py::arg("reference"));

  m.def(
      "smooth_motion_video",
      [](std::size_t frames, std::size_t height, std::size_t width, std::size_t channels, double vx, double vy,
         std::uint64_t seed) {
        SmoothMotionParams p;
        p.frames = frames;
        p.height = height;
        p.width = width;
        p.channels = channels;
        p.velocity_x = vx;
        p.velocity_y = vy;
        p.seed = seed;
        return to_array(make_smooth_motion_video(p));
      },
      py::arg("frames") = 10, py::arg("height") = 64, py::arg("width") = 64, py::arg("channels") = 1,
      py::arg("velocity_x") = 1.0, py::arg("velocity_y") = 0.0, py::arg("seed") = 1);

  m.def("run", &run_command, "Run a CLI command on a config file; returns 0 on success.", py::arg("command"),
        py::arg("config"));
}
