#include <algorithm>
#include <chrono>
#include <string>

#include "ags/errors.hpp"
#include "ags/optimization.hpp"

namespace ags {

namespace {

class Stopwatch {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

PipelineResult run_pipeline(const ImageSet& images, const CameraList& init_cameras, const ReconstructionConfig& cfg_r,
                            const OutlierConfig& cfg_o, PriorBackend* prior, const PoseSearchConfig& cfg_search) {
  cfg_r.validate();
  cfg_o.validate();
  images.validate();
  if (images.size() != init_cameras.size()) throw std::invalid_argument("run_pipeline: images and cameras differ");
  const int floor = cfg_o.min_inliers(images.size());
  if (static_cast<int>(images.size()) < floor)
    throw InsufficientInliersError("run_pipeline: " + std::to_string(images.size()) + " views is below the inlier floor " +
                                   std::to_string(floor));

  PipelineResult out;
  PipelineReport& report = out.report;
  report.initial_cameras = init_cameras;
  CameraList cams = init_cameras;
  std::vector<int> outliers;

  // Scene over the current inliers with refined poses; `scene_outliers` is
  // the outlier set it was built without.
  std::vector<int> scene_outliers;
  const auto refine_inliers = [&] {
    ImageSet inlier_images;
    CameraList inlier_cams;
    std::vector<int> inliers;
    for (int i = 0; i < static_cast<int>(images.size()); ++i) {
      if (std::find(outliers.begin(), outliers.end(), i) != outliers.end()) continue;
      inliers.push_back(i);
      inlier_images.images.push_back(images[static_cast<std::size_t>(i)]);
      inlier_cams.push_back(cams[static_cast<std::size_t>(i)]);
    }
    ReconstructionResult rec = reconstruct(inlier_images, inlier_cams, cfg_r, prior);
    for (std::size_t j = 0; j < inliers.size(); ++j) cams[static_cast<std::size_t>(inliers[j])] = rec.cameras[j];
    out.scene = std::move(rec.scene);
    scene_outliers = outliers;
  };

  for (int k = 1; k <= cfg_o.iterations; ++k) {
    const Stopwatch watch;
    refine_inliers();
    const FilterResult filtered = filter_outliers(images, cams, cfg_r, cfg_o, prior, outliers);
    const bool changed = filtered.outliers != outliers;
    outliers = filtered.outliers;
    for (const OutlierTest& t : filtered.tests)
      if (t.flagged) report.evidence.push_back(t);
    report.iterations.push_back({k, cams, filtered.inliers, filtered.outliers, filtered.tests});
    report.timings.push_back({"iteration " + std::to_string(k), watch.elapsed_ms()});
    if (!changed) break;
  }

  report.outliers = outliers;
  report.inliers = report.iterations.back().inliers;

  if (!outliers.empty()) {
    const Stopwatch watch;
    if (scene_outliers != outliers) refine_inliers();
    CameraList inlier_cams;
    for (int i : report.inliers) inlier_cams.push_back(cams[static_cast<std::size_t>(i)]);
    for (int o : outliers) {
      const auto oi = static_cast<std::size_t>(o);
      const PoseSearchResult found = correct_outlier_pose(out.scene, images[oi], cams[oi].intrinsics, inlier_cams, cfg_search);
      cams[oi] = found.camera;
      report.corrected[o] = found.camera;
    }
    report.timings.push_back({"pose correction", watch.elapsed_ms()});
  }

  const Stopwatch watch;
  ReconstructionResult final_rec = reconstruct(images, cams, cfg_r, prior);
  report.timings.push_back({"final reconstruction", watch.elapsed_ms()});
  out.scene = std::move(final_rec.scene);
  out.cameras = std::move(final_rec.cameras);
  report.final_cameras = out.cameras;
  return out;
}

}  // namespace ags
