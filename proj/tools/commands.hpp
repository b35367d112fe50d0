#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ags/optimization.hpp"
#include "ags/synthetic.hpp"

namespace ags::cli {

/// Merged view of an "agsconfig/1" file and command-line overrides.
struct RunConfig {
  ReconstructionConfig reconstruction;
  OutlierConfig outliers;
  PoseSearchConfig pose_search;
  CaptureOptions capture;
  std::string scene_style = "cluster";
  int scene_gaussians = 512;

  std::string prior = "oracle";  // "oracle" or "remote:<url>"
  std::uint64_t seed = 0;
  int threads = 1;

  int mesh_resolution = 64;
  int f1_samples = 100000;
  std::vector<double> rot_thresholds_deg = {5.0, 15.0};
  std::vector<double> f1_thresholds = {0.01, 0.05};
  int novel_views = 4;

  void validate() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> prior;
  std::optional<int> threads;
};

/// Defaults, then the file (if any), then the overrides. Unknown keys and bad
/// values raise ValidationError naming the key.
RunConfig parse_config(const std::optional<std::filesystem::path>& file, const Overrides& overrides);

/// The effective configuration as an "agsconfig/1" document.
std::string config_to_json(const RunConfig& cfg);

void run_generate(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct ReconstructPaths {
  std::filesystem::path capture;  // directory with manifest.json
  std::optional<std::filesystem::path> poses;  // overrides the manifest's initial poses
  std::filesystem::path out;
};
void run_reconstruct(const RunConfig& cfg, const ReconstructPaths& paths);

struct EvaluatePaths {
  std::filesystem::path capture;
  std::filesystem::path result;  // directory written by reconstruct
  std::filesystem::path out;     // metrics file
};
void run_evaluate(const RunConfig& cfg, const EvaluatePaths& paths);

struct SearchPosePaths {
  std::filesystem::path scene;
  std::filesystem::path image;
  std::filesystem::path poses;  // inlier cameras; the first supplies the intrinsics
  std::filesystem::path out;
};
void run_search_pose(const RunConfig& cfg, const SearchPosePaths& paths);

}  // namespace ags::cli
