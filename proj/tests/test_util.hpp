#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "flair/rng.hpp"
#include "flair/video.hpp"

namespace flair::test {

inline VideoTensor random_video(const VideoShape& shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  VideoTensor v(shape);
  for (double& x : v.values()) x = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("flair_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace flair::test
