#include "run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace flair::cli {

namespace {

const std::set<std::string>& schema() {
  static const std::set<std::string> keys = {
      "task",
      "output_dir",
      // degrade
      "degrade.input",
      "degrade.scale",
      "degrade.kernel",
      "degrade.kernel_size",
      "degrade.kernel_file",
      "degrade.blur_sigma",
      "degrade.blur_sigma_y",
      "degrade.blur_theta",
      "degrade.motion_intensity",
      "degrade.kernel_seed",
      "degrade.per_frame_kernels",
      "degrade.noise_sigma",
      "degrade.noise_unit",
      "degrade.noise_seed",
      "degrade.jpeg_quality",
      "degrade.png_preview",
      // sampler
      "sampler.T",
      "sampler.beta_1",
      "sampler.beta_T",
      "sampler.steps",
      "sampler.rho",
      "sampler.zeta",
      "sampler.w_tau",
      "sampler.tau",
      "sampler.guidance",
      "sampler.eta",
      "sampler.seed",
      "sampler.mode",
      "sampler.update",
      "sampler.debug_checks",
      // restore
      "restore.measurement",
      "restore.sidecar",
      "restore.denoiser",
      "restore.truth",
      "restore.shrinkage_strength",
      "restore.denoiser_command",
      "restore.enhancer",
      "restore.unsharp_amount",
      "restore.unsharp_radius",
      "restore.enhancer_command",
      "restore.mask",
      "restore.output",
      "restore.png_output",
      "restore.trace",
      // evaluate
      "evaluate.restored",
      "evaluate.reference",
      "evaluate.flow",
      "evaluate.output",
      // schedule
      "schedule.output",
  };
  return keys;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Task parse_task(std::string_view name) {
  if (name == "sr") return Task::sr;
  if (name == "deblur-gaussian") return Task::deblur_gaussian;
  if (name == "deblur-motion") return Task::deblur_motion;
  if (name == "jpeg") return Task::jpeg;
  if (name == "composite") return Task::composite;
  throw ConfigError("unknown task '" + std::string(name) +
                    "' (expected sr, deblur-gaussian, deblur-motion, jpeg or composite)");
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::sr: return "sr";
    case Task::deblur_gaussian: return "deblur-gaussian";
    case Task::deblur_motion: return "deblur-motion";
    case Task::jpeg: return "jpeg";
    case Task::composite: return "composite";
  }
  return "?";
}

TaskPreset preset_for(Task task, std::size_t scale) {
  switch (task) {
    case Task::sr:
      if (scale == 16) return {2000, 1e-6, 0.01, 100, 0.85, 0.7, 5, 0.0};
      return {2000, 1e-6, 0.01, 25, 0.85, 0.85, 5, 0.0};
    case Task::deblur_gaussian: return {1000, 1e-4, 0.02, 100, 0.25, 0.75, 5, 1000.0};
    case Task::deblur_motion: return {1000, 1e-4, 0.02, 65, 0.35, 0.1, 5, 1000.0};
    case Task::jpeg:
    case Task::composite: return {1000, 1e-4, 0.02, 40, 0.5, 0.5, 5, 1000.0};
  }
  throw ConfigError("no preset for task");
}

RunConfig RunConfig::parse(std::string_view text, std::filesystem::path base_dir) {
  RunConfig cfg;
  cfg.text_ = std::string(text);
  cfg.base_dir_ = std::move(base_dir);
  std::string section;
  std::istringstream in(cfg.text_);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    std::string full = section.empty() ? key : section + "." + key;
    if (!schema().count(full)) throw ConfigError(where + "unknown key '" + full + "'");
    if (cfg.values_.count(full)) throw ConfigError(where + "duplicate key '" + full + "'");
    cfg.values_[full] = value;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::string RunConfig::get_string(const std::string& key, std::string fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(key + ": expected a finite number, got '" + s + "'");
  }
  return v;
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  }
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + s + "'");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::optional<std::filesystem::path> RunConfig::get_path(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) return std::nullopt;
  std::filesystem::path p(it->second);
  if (p.is_relative()) p = base_dir_ / p;
  return p;
}

std::filesystem::path RunConfig::output_dir() const {
  auto p = get_path("output_dir");
  if (!p) throw ConfigError("output_dir is required");
  return *p;
}

Task RunConfig::task() const {
  if (!has("task")) throw ConfigError("task is required");
  return parse_task(get_string("task"));
}

std::string RunConfig::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text_) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace flair::cli
