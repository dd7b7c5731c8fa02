#pragma once

#include "hack/dataset.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace fixtures {

/// A few hundred vertices, enough for every stage to run in milliseconds.
inline hack::SyntheticConfig small_config() {
  hack::SyntheticConfig c;
  c.rings = 16;
  c.segments = 12;
  c.num_betas = 6;
  c.num_expressions = 4;
  c.identities = 12;
  c.annotated = 10;
  c.expression_components = 3;
  c.pose_components = 2;
  c.appearance_components = 3;
  c.appearance_size = 8;
  c.dynamic_subjects = 2;
  c.clip_frames = 20;
  c.pulse_frames = 8;
  c.uv_size = 32;
  c.landmarks = 10;
  return c;
}

inline const hack::SyntheticTruth& small_truth() {
  static const hack::SyntheticTruth truth = hack::generate_dataset(small_config());
  return truth;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("hack_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace fixtures
