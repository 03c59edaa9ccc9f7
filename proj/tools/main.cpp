#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "commands.hpp"
#include "run_config.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video restoration with diffusion priors and data consistency"};
  app.require_subcommand(1);
  std::string config_path;
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const flair::cli::RunConfig&);
  };
  const Sub subs[] = {
      {"degrade", "Apply the configured degradation and write the measurement", flair::cli::cmd_degrade},
      {"restore", "Restore a measurement written by degrade", flair::cli::cmd_restore},
      {"evaluate", "Write PSNR/SSIM/E_warp for a restored video", flair::cli::cmd_evaluate},
      {"schedule", "Dump the inference schedule as CSV", flair::cli::cmd_schedule},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "Config file")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    auto cfg = flair::cli::RunConfig::load(config_path);
    for (const auto& s : subs) {
      if (app.got_subcommand(s.name)) return s.run(cfg);
    }
  } catch (const flair::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kConfigError;
}
