#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ags/errors.hpp"
#include "ags/optimization.hpp"

namespace ags {

namespace {

ImageSet select_images(const ImageSet& images, std::span<const int> keep) {
  ImageSet out;
  for (int i : keep) out.images.push_back(images[static_cast<std::size_t>(i)]);
  return out;
}

CameraList select_cameras(std::span<const Camera> cameras, std::span<const int> keep) {
  CameraList out;
  for (int i : keep) out.push_back(cameras[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<int> all_but(std::size_t n, int skip) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(n); ++i)
    if (i != skip) out.push_back(i);
  return out;
}

}  // namespace

ReconstructionConfig detection_config(const ReconstructionConfig& cfg_r, const OutlierConfig& cfg_o) {
  ReconstructionConfig cfg = cfg_r;
  cfg.steps = cfg_o.detection_steps;
  cfg.pose_opt_enabled = false;
  return cfg;
}

int OutlierConfig::min_inliers(std::size_t n_views) const {
  if (min_inliers_override > 0) return min_inliers_override;
  if (n_views <= 8) return 4;
  if (n_views == 10) return 6;
  if (n_views == 16) return 12;
  return static_cast<int>(std::ceil(0.7 * static_cast<double>(n_views)));
}

void OutlierConfig::validate() const {
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
  if (detection_steps < 1) throw ValidationError("detection_steps must be >= 1");
  if (min_inliers_override != 0 && min_inliers_override < 2) throw ValidationError("min_inliers must be >= 2");
}

OutlierTest is_outlier(const ImageSet& images, const CameraList& cameras, int candidate, const ReconstructionConfig& cfg_r,
                       const OutlierConfig& cfg_o, PriorBackend* prior) {
  cfg_o.validate();
  if (candidate < 0 || candidate >= static_cast<int>(images.size()))
    throw std::invalid_argument("is_outlier: candidate index out of range");
  if (images.size() < 3) throw std::invalid_argument("is_outlier: need at least 3 images");

  const ReconstructionConfig cfg = detection_config(cfg_r, cfg_o);
  const std::vector<int> rest = all_but(images.size(), candidate);
  const ImageSet rest_images = select_images(images, rest);

  const ReconstructionResult with = reconstruct(images, cameras, cfg, prior);
  const ReconstructionResult without = reconstruct(rest_images, select_cameras(cameras, rest), cfg, prior);

  OutlierTest test;
  test.index = candidate;
  test.e_with = reprojection_error(with.scene, rest_images, select_cameras(with.cameras, rest), ErrorMetric::kProxy);
  test.e_without = reprojection_error(without.scene, rest_images, without.cameras, ErrorMetric::kProxy);
  test.flagged = significant_increase(test.e_with, test.e_without, cfg_o.delta);
  return test;
}

FilterResult filter_outliers(const ImageSet& images, const CameraList& cameras, const ReconstructionConfig& cfg_r,
                             const OutlierConfig& cfg_o, PriorBackend* prior, std::span<const int> known_outliers) {
  cfg_o.validate();
  if (images.size() < 2) throw std::invalid_argument("filter_outliers: need at least 2 images");
  if (images.size() != cameras.size()) throw std::invalid_argument("filter_outliers: images and cameras differ");
  const int floor = cfg_o.min_inliers(images.size());

  const ReconstructionConfig cfg = detection_config(cfg_r, cfg_o);
  FilterResult out;
  for (int i = 0; i < static_cast<int>(images.size()); ++i) {
    if (std::find(known_outliers.begin(), known_outliers.end(), i) != known_outliers.end())
      out.outliers.push_back(i);
    else
      out.inliers.push_back(i);
  }

  while (true) {
    const ImageSet inlier_images = select_images(images, out.inliers);
    const CameraList inlier_cameras = select_cameras(cameras, out.inliers);
    out.reconstruction = reconstruct(inlier_images, inlier_cameras, cfg, prior);
    if (static_cast<int>(out.inliers.size()) - 1 < floor) break;

    const auto errors =
        per_view_errors(out.reconstruction.scene, inlier_images, out.reconstruction.cameras, ErrorMetric::kProxy);
    const auto worst = static_cast<std::size_t>(std::max_element(errors.begin(), errors.end()) - errors.begin());

    OutlierTest test = is_outlier(inlier_images, inlier_cameras, static_cast<int>(worst), cfg_r, cfg_o, prior);
    test.index = out.inliers[worst];
    out.tests.push_back(test);
    if (!test.flagged) break;
    out.outliers.push_back(test.index);
    out.inliers.erase(out.inliers.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  std::sort(out.outliers.begin(), out.outliers.end());
  return out;
}

}  // namespace ags
