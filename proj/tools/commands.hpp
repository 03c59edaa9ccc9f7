#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "flair/degrade.hpp"
#include "flair/metrics.hpp"
#include "flair/sampler.hpp"
#include "run_config.hpp"

namespace flair::cli {

/// Everything needed to rebuild the measurement operator; stored in the
/// degrade sidecar.
struct OperatorSpec {
  Task task = Task::sr;
  VideoShape shape;
  std::size_t scale = 1;
  std::string kernel = "delta";  // delta | bicubic | gaussian | motion | box | file
  std::size_t kernel_size = 1;
  std::string kernel_file;
  double blur_sigma = 2.0;
  double blur_sigma_y = 2.0;
  double blur_theta = 0.0;
  double motion_intensity = 0.5;
  std::uint64_t kernel_seed = 0;
  bool per_frame_kernels = false;
  double noise_sigma = 0.0;  // model-range units
  std::uint64_t noise_seed = 0;
  int jpeg_quality = 0;  // 0: no JPEG stage
};

/// Task defaults overridden by the [degrade] section. `shape` is left empty.
OperatorSpec operator_spec_from_config(const RunConfig& cfg);

std::vector<Kernel> build_kernels(const OperatorSpec& spec);
DegradationOperator build_operator(const OperatorSpec& spec);

/// Converts a configured noise level to model-range units.
/// unit: "model" (as is), "unit" ([0,1] range, x2) or "8bit" (2 sigma / 255).
double noise_to_model(double sigma, const std::string& unit);

/// Sampler settings: task preset, then [sampler] overrides. sigma_e comes
/// from the operator.
SamplerConfig sampler_config_from(const RunConfig& cfg, const OperatorSpec& spec);

int cmd_degrade(const RunConfig& cfg);
int cmd_restore(const RunConfig& cfg);
int cmd_evaluate(const RunConfig& cfg);
int cmd_schedule(const RunConfig& cfg);

/// Writes metrics.csv content for a report.
void write_metrics_csv(std::ostream& os, const MetricReport& report);

}  // namespace flair::cli
