#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace flair::cli {

/// Bad or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { sr, deblur_gaussian, deblur_motion, jpeg, composite };

Task parse_task(std::string_view name);
std::string_view to_string(Task task);

/// Hyperparameter row for a task.
struct TaskPreset {
  int diffusion_steps;  // T
  double beta_1;
  double beta_T;
  int steps;  // K
  double rho;
  double w_tau;
  int tau;
  double zeta;
};

/// sr uses the 16x row when scale is 16 and the 8x row otherwise;
/// composite uses the jpeg row.
TaskPreset preset_for(Task task, std::size_t scale);

/// Parsed config file
///
///   # comment
///   task = sr
///   output_dir = out
///   [degrade]
///   scale = 4
///
/// Keys inside a section are addressed as "section.key". Every key must be
/// in the schema; values are validated when read.
class RunConfig {
 public:
  static RunConfig parse(std::string_view text, std::filesystem::path base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, std::string fallback = {}) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Path value resolved against the config file's directory.
  std::optional<std::filesystem::path> get_path(const std::string& key) const;

  /// output_dir, created on demand by the commands.
  std::filesystem::path output_dir() const;
  Task task() const;

  const std::string& text() const { return text_; }
  /// FNV-1a 64 of the raw config text, hex.
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
  std::string text_;
};

}  // namespace flair::cli
