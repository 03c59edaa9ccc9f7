#include "commands.hpp"

#include <fftw3.h>
#include <png.h>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <ostream>
#include <vector>

#include "flair/denoisers.hpp"
#include "flair/kernel.hpp"
#include "flair/schedule.hpp"

#ifndef FLAIR_VERSION
#define FLAIR_VERSION "0.0.0"
#endif

namespace flair::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string kernel_default(Task task) {
  switch (task) {
    case Task::sr: return "bicubic";
    case Task::deblur_gaussian:
    case Task::composite: return "gaussian";
    case Task::deblur_motion: return "motion";
    case Task::jpeg: return "delta";
  }
  return "delta";
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

void write_manifest(const RunConfig& cfg, const std::string& command, const json& seeds) {
  json m;
  m["command"] = command;
  m["config_hash"] = "fnv1a64:" + cfg.hash();
  m["config"] = cfg.text();
  m["seeds"] = seeds;
  m["versions"] = {{"flair", FLAIR_VERSION},
                   {"fftw", std::string(fftw_version)},
                   {"libpng", PNG_LIBPNG_VER_STRING}};
  write_text(cfg.output_dir() / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

json spec_to_json(const OperatorSpec& s) {
  return json{{"task", std::string(to_string(s.task))},
              {"shape", {s.shape.frames, s.shape.height, s.shape.width, s.shape.channels}},
              {"scale", s.scale},
              {"kernel", s.kernel},
              {"kernel_size", s.kernel_size},
              {"kernel_file", s.kernel_file},
              {"blur_sigma", s.blur_sigma},
              {"blur_sigma_y", s.blur_sigma_y},
              {"blur_theta", s.blur_theta},
              {"motion_intensity", s.motion_intensity},
              {"kernel_seed", s.kernel_seed},
              {"per_frame_kernels", s.per_frame_kernels},
              {"noise_sigma", s.noise_sigma},
              {"noise_seed", s.noise_seed},
              {"jpeg_quality", s.jpeg_quality}};
}

OperatorSpec spec_from_json(const json& j) {
  OperatorSpec s;
  s.task = parse_task(j.at("task").get<std::string>());
  auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 4) throw std::runtime_error("sidecar: shape must have 4 entries");
  s.shape = VideoShape{shape[0], shape[1], shape[2], shape[3]};
  s.scale = j.at("scale").get<std::size_t>();
  s.kernel = j.at("kernel").get<std::string>();
  s.kernel_size = j.at("kernel_size").get<std::size_t>();
  s.kernel_file = j.at("kernel_file").get<std::string>();
  s.blur_sigma = j.at("blur_sigma").get<double>();
  s.blur_sigma_y = j.at("blur_sigma_y").get<double>();
  s.blur_theta = j.at("blur_theta").get<double>();
  s.motion_intensity = j.at("motion_intensity").get<double>();
  s.kernel_seed = j.at("kernel_seed").get<std::uint64_t>();
  s.per_frame_kernels = j.at("per_frame_kernels").get<bool>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  s.jpeg_quality = j.at("jpeg_quality").get<int>();
  return s;
}

}  // namespace

double noise_to_model(double sigma, const std::string& unit) {
  if (!(sigma >= 0.0)) throw ConfigError("degrade.noise_sigma must be >= 0");
  if (unit == "model") return sigma;
  if (unit == "unit") return 2.0 * sigma;
  if (unit == "8bit") return 2.0 * sigma / 255.0;
  throw ConfigError("degrade.noise_unit must be model, unit or 8bit (got '" + unit + "')");
}

OperatorSpec operator_spec_from_config(const RunConfig& cfg) {
  OperatorSpec s;
  s.task = cfg.task();
  const bool sr_like = s.task == Task::sr || s.task == Task::composite;
  const long long scale = cfg.get_int("degrade.scale", sr_like ? 4 : 1);
  if (scale < 1) throw ConfigError("degrade.scale must be >= 1");
  s.scale = static_cast<std::size_t>(scale);
  s.kernel = cfg.get_string("degrade.kernel", kernel_default(s.task));
  const long long default_size = s.kernel == "bicubic" ? 4 * scale + 1 : (s.kernel == "delta" ? 1 : 25);
  const long long ksize = cfg.get_int("degrade.kernel_size", default_size);
  if (ksize < 1 || ksize % 2 == 0) throw ConfigError("degrade.kernel_size must be a positive odd integer");
  s.kernel_size = static_cast<std::size_t>(ksize);
  s.blur_sigma = cfg.get_double("degrade.blur_sigma", 2.0);
  s.blur_sigma_y = cfg.get_double("degrade.blur_sigma_y", s.blur_sigma);
  s.blur_theta = cfg.get_double("degrade.blur_theta", 0.0);
  if (!(s.blur_sigma > 0.0 && s.blur_sigma_y > 0.0)) throw ConfigError("degrade.blur_sigma must be > 0");
  s.motion_intensity = cfg.get_double("degrade.motion_intensity", 0.5);
  if (!(s.motion_intensity >= 0.0 && s.motion_intensity <= 1.0)) {
    throw ConfigError("degrade.motion_intensity must lie in [0, 1]");
  }
  s.kernel_seed = cfg.get_u64("degrade.kernel_seed", 0);
  s.per_frame_kernels = cfg.get_bool("degrade.per_frame_kernels", false);
  if (s.kernel == "file") {
    auto p = cfg.get_path("degrade.kernel_file");
    if (!p) throw ConfigError("degrade.kernel = file needs degrade.kernel_file");
    s.kernel_file = fs::absolute(*p).string();
  } else if (s.kernel != "delta" && s.kernel != "bicubic" && s.kernel != "gaussian" &&
             s.kernel != "motion" && s.kernel != "box") {
    throw ConfigError("degrade.kernel must be delta, bicubic, gaussian, motion, box or file (got '" +
                      s.kernel + "')");
  }
  if (s.kernel == "bicubic" && s.kernel_size != 4 * s.scale + 1) {
    throw ConfigError("degrade.kernel_size for the bicubic kernel is fixed at 4*scale+1");
  }
  s.noise_sigma = noise_to_model(cfg.get_double("degrade.noise_sigma", 0.0),
                                 cfg.get_string("degrade.noise_unit", "8bit"));
  s.noise_seed = cfg.get_u64("degrade.noise_seed", 0);
  const bool has_jpeg = s.task == Task::jpeg || s.task == Task::composite;
  const long long q = cfg.get_int("degrade.jpeg_quality", has_jpeg ? 75 : 0);
  if (has_jpeg && (q < 1 || q > 100)) throw ConfigError("degrade.jpeg_quality must lie in [1, 100]");
  if (!has_jpeg && cfg.has("degrade.jpeg_quality")) {
    throw ConfigError("degrade.jpeg_quality only applies to the jpeg and composite tasks");
  }
  s.jpeg_quality = static_cast<int>(q);
  return s;
}

std::vector<Kernel> build_kernels(const OperatorSpec& s) {
  const std::size_t count = s.per_frame_kernels ? s.shape.frames : 1;
  std::vector<Kernel> out;
  for (std::size_t n = 0; n < count; ++n) {
    if (s.kernel == "delta") {
      out.push_back(Kernel::delta(s.kernel_size));
    } else if (s.kernel == "bicubic") {
      out.push_back(make_bicubic_kernel(s.scale));
    } else if (s.kernel == "gaussian") {
      out.push_back(make_gaussian_kernel(s.kernel_size, s.blur_sigma, s.blur_sigma_y, s.blur_theta));
    } else if (s.kernel == "motion") {
      out.push_back(make_motion_kernel(s.kernel_size, s.kernel_seed + n, s.motion_intensity));
    } else if (s.kernel == "box") {
      out.push_back(make_box_kernel(s.kernel_size));
    } else if (s.kernel == "file") {
      out.push_back(read_kernel(s.kernel_file));
    } else {
      throw ConfigError("unknown kernel '" + s.kernel + "'");
    }
  }
  return out;
}

DegradationOperator build_operator(const OperatorSpec& s) {
  if (s.scale == 0 || s.shape.height % s.scale != 0 || s.shape.width % s.scale != 0) {
    throw ConfigError("degrade.scale " + std::to_string(s.scale) + " does not divide the " +
                      std::to_string(s.shape.height) + "x" + std::to_string(s.shape.width) + " input");
  }
  DegradationOperator linear = DegradationOperator::blur_decimate(s.shape, build_kernels(s), s.scale)
                                   .with_noise(s.noise_sigma);
  if (s.jpeg_quality == 0) return linear;
  DegradationOperator ops[] = {linear, DegradationOperator::jpeg(linear.output_shape(), s.jpeg_quality)};
  return DegradationOperator::compose(ops);
}

SamplerConfig sampler_config_from(const RunConfig& cfg, const OperatorSpec& spec) {
  const TaskPreset p = preset_for(spec.task, spec.scale);
  SamplerConfig c;
  const long long T = cfg.get_int("sampler.T", p.diffusion_steps);
  if (T < 2) throw ConfigError("sampler.T must be >= 2");
  const double b1 = cfg.get_double("sampler.beta_1", p.beta_1);
  const double bT = cfg.get_double("sampler.beta_T", p.beta_T);
  if (!(b1 > 0.0 && bT < 1.0 && b1 <= bT)) throw ConfigError("sampler betas must satisfy 0 < beta_1 <= beta_T < 1");
  c.schedule = linear_schedule(static_cast<int>(T), b1, bT);
  c.steps = static_cast<int>(cfg.get_int("sampler.steps", p.steps));
  c.params.rho = cfg.get_double("sampler.rho", p.rho);
  c.params.zeta = cfg.get_double("sampler.zeta", p.zeta);
  c.params.w_tau = cfg.get_double("sampler.w_tau", p.w_tau);
  c.params.tau = static_cast<int>(cfg.get_int("sampler.tau", p.tau));
  c.params.sigma_e = spec.noise_sigma;
  c.guidance = cfg.get_double("sampler.guidance", 1.0);
  c.eta = cfg.get_double("sampler.eta", 0.0);
  c.seed = cfg.get_u64("sampler.seed", 0);
  c.debug_checks = cfg.get_bool("sampler.debug_checks", false);
  const bool composite = spec.jpeg_quality != 0;
  const std::string default_mode = composite ? "composite" : (spec.noise_sigma > 0.0 ? "noisy" : "noiseless");
  try {
    c.mode = parse_consistency_mode(cfg.get_string("sampler.mode", default_mode));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sampler.mode: ") + e.what());
  }
  if (composite && c.mode != ConsistencyMode::composite) {
    throw ConfigError("sampler.mode must be composite when a JPEG stage is present");
  }
  const std::string update = cfg.get_string("sampler.update", "noisy");
  if (update == "noisy") {
    c.update = ReverseUpdate::noisy;
  } else if (update == "ddim") {
    c.update = ReverseUpdate::ddim;
  } else {
    throw ConfigError("sampler.update must be noisy or ddim (got '" + update + "')");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

int cmd_degrade(const RunConfig& cfg) {
  OperatorSpec spec = operator_spec_from_config(cfg);
  auto input = cfg.get_path("degrade.input");
  if (!input) throw ConfigError("degrade.input is required");
  const bool preview = cfg.get_bool("degrade.png_preview", true);
  const fs::path out = cfg.output_dir();

  VideoTensor x = read_video(*input);
  spec.shape = x.shape();
  DegradationOperator op = build_operator(spec);
  VideoTensor y = op.apply(x, spec.noise_seed);

  ensure_dir(out);
  write_video(y, out / "measurement.vten", VideoFormat::vten);
  if (preview) {
    ensure_dir(out / "measurement_png");
    write_video(y, out / "measurement_png", VideoFormat::png_sequence);
  }
  const auto kernels = op.kernels();
  json kernel_files = json::array();
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "kernel_%05zu.txt", i);
    write_kernel(kernels[i], out / name);
    kernel_files.push_back(name);
  }
  json sidecar;
  sidecar["operator"] = spec_to_json(spec);
  sidecar["measurement"] = "measurement.vten";
  sidecar["measurement_shape"] = {y.frames(), y.height(), y.width(), y.channels()};
  sidecar["kernel_files"] = kernel_files;
  sidecar["config_hash"] = "fnv1a64:" + cfg.hash();
  write_text(out / "sidecar.json", sidecar.dump(2) + "\n");
  write_manifest(cfg, "degrade", {{"noise_seed", spec.noise_seed}, {"kernel_seed", spec.kernel_seed}});
  return 0;
}

int cmd_restore(const RunConfig& cfg) {
  const fs::path out = cfg.output_dir();
  const Task task = cfg.task();
  fs::path sidecar_path = cfg.get_path("restore.sidecar").value_or(out / "sidecar.json");
  if (!fs::exists(sidecar_path)) {
    throw std::runtime_error("sidecar not found: expected " + sidecar_path.string() +
                             " (run degrade first or set restore.sidecar)");
  }
  json sidecar;
  {
    std::ifstream f(sidecar_path);
    try {
      sidecar = json::parse(f);
    } catch (const json::exception& e) {
      throw std::runtime_error("malformed sidecar " + sidecar_path.string() + ": " + e.what());
    }
  }
  OperatorSpec spec;
  try {
    spec = spec_from_json(sidecar.at("operator"));
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed sidecar " + sidecar_path.string() + ": " + e.what());
  }
  if (spec.task != task) {
    throw ConfigError("config task '" + std::string(to_string(task)) + "' does not match the sidecar task '" +
                      std::string(to_string(spec.task)) + "'");
  }
  SamplerConfig sc = sampler_config_from(cfg, spec);

  fs::path y_path = cfg.get_path("restore.measurement")
                        .value_or(sidecar_path.parent_path() / sidecar.value("measurement", "measurement.vten"));
  VideoTensor y = read_video(y_path);
  DegradationOperator op = build_operator(spec);
  if (y.shape() != op.output_shape()) {
    throw ConfigError("measurement " + y_path.string() + " does not match the operator in the sidecar");
  }
  std::optional<VideoTensor> mask;
  if (auto m = cfg.get_path("restore.mask")) mask = read_video(*m);
  RestorationProblem problem(op, y, std::move(mask));

  const std::string dkind = cfg.get_string("restore.denoiser", "shrinkage");
  std::unique_ptr<Denoiser> denoiser;
  if (dkind == "oracle") {
    auto truth = cfg.get_path("restore.truth");
    if (!truth) throw ConfigError("restore.denoiser = oracle needs restore.truth");
    VideoTensor x = read_video(*truth);
    if (x.shape() != op.input_shape()) throw ConfigError("restore.truth does not match the restoration shape");
    denoiser = std::make_unique<OracleDenoiser>(std::move(x));
  } else if (dkind == "zero") {
    denoiser = std::make_unique<ZeroDenoiser>();
  } else if (dkind == "shrinkage") {
    double strength = cfg.get_double("restore.shrinkage_strength", 1.0);
    if (!(strength >= 0.0)) throw ConfigError("restore.shrinkage_strength must be >= 0");
    denoiser = std::make_unique<ShrinkageDenoiser>(strength);
  } else if (dkind == "subprocess") {
    std::string command = cfg.get_string("restore.denoiser_command");
    if (command.empty()) throw ConfigError("restore.denoiser = subprocess needs restore.denoiser_command");
    denoiser = std::make_unique<SubprocessDenoiser>(command);
  } else {
    throw ConfigError("restore.denoiser must be oracle, zero, shrinkage or subprocess (got '" + dkind + "')");
  }

  const std::string ekind = cfg.get_string("restore.enhancer", "identity");
  std::unique_ptr<Enhancer> enhancer;
  if (ekind == "identity") {
    enhancer = std::make_unique<IdentityEnhancer>();
  } else if (ekind == "unsharp") {
    double amount = cfg.get_double("restore.unsharp_amount", 1.0);
    double radius = cfg.get_double("restore.unsharp_radius", 1.0);
    if (!(amount >= 0.0) || !(radius > 0.0)) {
      throw ConfigError("restore.unsharp_amount must be >= 0 and restore.unsharp_radius > 0");
    }
    enhancer = std::make_unique<UnsharpEnhancer>(amount, radius);
  } else if (ekind == "subprocess") {
    std::string command = cfg.get_string("restore.enhancer_command");
    if (command.empty()) throw ConfigError("restore.enhancer = subprocess needs restore.enhancer_command");
    enhancer = std::make_unique<SubprocessEnhancer>(command);
  } else {
    throw ConfigError("restore.enhancer must be identity, unsharp or subprocess (got '" + ekind + "')");
  }

  const fs::path out_path = cfg.get_path("restore.output").value_or(out / "restored.vten");
  const bool png = cfg.get_bool("restore.png_output", true);
  const bool trace = cfg.get_bool("restore.trace", true);

  RestoreResult r = restore(problem, *denoiser, *enhancer, sc);

  ensure_dir(out);
  write_video(r.restored, out_path, VideoFormat::vten);
  if (png) {
    ensure_dir(out / "restored_png");
    write_video(r.restored, out / "restored_png", VideoFormat::png_sequence);
  }
  if (trace) {
    std::ofstream f(out / "trace.csv");
    if (!f) throw std::runtime_error("cannot write " + (out / "trace.csv").string());
    write_trace_csv(f, r.trace);
  }
  write_manifest(cfg, "restore",
                 {{"noise_seed", spec.noise_seed}, {"kernel_seed", spec.kernel_seed}, {"sampler_seed", sc.seed}});
  return 0;
}

void write_metrics_csv(std::ostream& os, const MetricReport& r) {
  os << "frame,psnr_db,ssim\n";
  for (std::size_t n = 0; n < r.psnr.size(); ++n) {
    os << n << ',' << format_double(r.psnr[n]) << ',' << format_double(r.ssim[n]) << '\n';
  }
  os << "mean_psnr," << format_double(r.mean_psnr) << '\n';
  os << "mean_ssim," << format_double(r.mean_ssim) << '\n';
  os << "e_warp," << (r.e_warp ? format_double(*r.e_warp) : std::string("nan")) << '\n';
}

int cmd_evaluate(const RunConfig& cfg) {
  const fs::path out = cfg.output_dir();
  auto reference = cfg.get_path("evaluate.reference");
  if (!reference) throw ConfigError("evaluate.reference is required");
  fs::path restored_path = cfg.get_path("evaluate.restored").value_or(out / "restored.vten");
  VideoTensor restored = read_video(restored_path);
  VideoTensor ref = read_video(*reference);
  if (restored.shape() != ref.shape()) {
    throw std::runtime_error("restored video " + restored_path.string() + " and reference " +
                             reference->string() + " have different dimensions");
  }
  std::optional<FlowField> flow;
  if (auto f = cfg.get_path("evaluate.flow")) flow = read_flow(*f);
  MetricReport report = evaluate(restored, ref, flow ? &*flow : nullptr);
  ensure_dir(out);
  const fs::path csv = cfg.get_path("evaluate.output").value_or(out / "metrics.csv");
  std::ofstream f(csv);
  if (!f) throw std::runtime_error("cannot write " + csv.string());
  write_metrics_csv(f, report);
  write_manifest(cfg, "evaluate", json::object());
  return 0;
}

int cmd_schedule(const RunConfig& cfg) {
  OperatorSpec spec = operator_spec_from_config(cfg);
  SamplerConfig sc = sampler_config_from(cfg, spec);
  const fs::path out = cfg.output_dir();
  InferenceSchedules s = build_schedules(reschedule(sc.schedule.steps(), sc.steps), sc.schedule, sc.params);
  ensure_dir(out);
  const fs::path csv = cfg.get_path("schedule.output").value_or(out / "schedule.csv");
  std::ofstream f(csv);
  if (!f) throw std::runtime_error("cannot write " + csv.string());
  write_schedule_csv(f, sc.schedule, s);
  write_manifest(cfg, "schedule", json::object());
  return 0;
}

}  // namespace flair::cli
