#pragma once

// Joint scene and pose inference: photometric + score-distillation
// reconstruction with in-loop pose descent, leave-one-out outlier filtering,
// render-and-compare pose correction, and the outer pipeline.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ags/camera_geometry.hpp"
#include "ags/gaussian.hpp"
#include "ags/image.hpp"
#include "ags/priors.hpp"
#include "ags/renderer.hpp"

namespace ags {

struct ReconstructionConfig {
  int steps = 500;
  int n_gaussians = 4096;

  // Adam step sizes. Scene rates decay exponentially to lr_final_fraction of
  // their initial value over the run; pose rates stay constant.
  double lr_mean = 1e-2;
  double lr_log_scale = 6e-2;
  double lr_orientation = 1e-2;
  double lr_opacity = 1e-1;
  double lr_color = 5e-2;
  double lr_pose_rotation = 3e-2;     // radians, about the viewing center
  double lr_pose_translation = 3e-2;  // scene units
  double lr_final_fraction = 0.3;
  int pose_warmup_steps = 0;  // scene-only steps before poses move
  int views_per_step = 1;     // input views rendered per optimizer step

  // Coarse-to-fine: both images are blurred with a Gaussian whose sigma falls
  // linearly from blur_sigma_px to zero at blur_anneal_fraction of the run.
  double blur_sigma_px = 12.0;
  double blur_anneal_fraction = 0.5;

  double lambda_photo = 1e4;
  double lambda_sds = 1.0;
  bool sds_enabled = false;
  bool pose_opt_enabled = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ReconstructionResult {
  GaussianScene scene;
  CameraList cameras;
  std::vector<double> photometric_loss;  // one entry per step
};

/// Fresh scene: n Gaussians uniform in the unit sphere, opacity logit -2,
/// isotropic extent half the mean spacing, colors near mid-grey.
GaussianScene initial_scene(int n_gaussians, std::uint64_t seed);

/// Pixels counted by the photometric loss: input alpha or render alpha above
/// this value.
inline constexpr double kMaskThreshold = 1.0 / 255.0;

/// lambda * mean over 3HW of mask * (render - target)^2. Writes the gradient
/// with respect to the rendered rgb when `grad` is given.
double photometric_loss(const RenderedImage& rendered, const Image& target, double lambda, PixelArray* grad = nullptr);

/// Separable Gaussian blur with zero padding; self-adjoint.
PixelArray gaussian_blur(const PixelArray& pixels, int width, int height, double sigma);

/// Photometric loss on blurred images, unmasked. Falls back to
/// photometric_loss when sigma is zero.
double blurred_photometric_loss(const RenderedImage& rendered, const Image& target, double lambda, double sigma,
                                PixelArray* grad = nullptr);

/// Least-squares point nearest to every optical axis; falls back to the
/// centroid of the centers when the axes are close to parallel.
Eigen::Vector3d viewing_center(std::span<const Camera> cameras);

/// Joint reconstruction. The result is expressed in the frame of camera 0,
/// which is returned exactly as given. `prior` may be null when SDS is
/// disabled.
ReconstructionResult reconstruct(const ImageSet& images, const CameraList& cameras, const ReconstructionConfig& cfg,
                                 PriorBackend* prior = nullptr);

enum class ErrorMetric { kMse, kProxy };

std::vector<double> per_view_errors(const GaussianScene& scene, const ImageSet& images, std::span<const Camera> cameras,
                                    ErrorMetric metric);

/// Mean over views of metric(render(scene, cam_i), I_i).
double reprojection_error(const GaussianScene& scene, const ImageSet& images, std::span<const Camera> cameras,
                          ErrorMetric metric);

struct OutlierConfig {
  double delta = 1e-3;        // proxy units
  int iterations = 3;         // K
  int detection_steps = 150;  // budget of each leave-one-out reconstruction
  int min_inliers_override = 0;

  /// 4 for N <= 8, 6 for N = 10, 12 for N = 16, otherwise ceil(0.7 N).
  int min_inliers(std::size_t n_views) const;
  void validate() const;
};

struct OutlierTest {
  int index = -1;  // into the caller's image set
  bool flagged = false;
  double e_with = 0.0;
  double e_without = 0.0;
};

/// Flag rule: removing the view lowers the error by more than delta.
inline bool significant_increase(double e_with, double e_without, double delta) { return e_with - e_without > delta; }

/// The configuration used for detection reconstructions: detection_steps
/// long, poses held at the given cameras.
ReconstructionConfig detection_config(const ReconstructionConfig& cfg_r, const OutlierConfig& cfg_o);

/// Leave-one-out test: reconstruct with and without `candidate` at the given
/// poses, score both on the remaining views with the proxy metric, flag when
/// removing the candidate lowers the error by more than delta.
OutlierTest is_outlier(const ImageSet& images, const CameraList& cameras, int candidate, const ReconstructionConfig& cfg_r,
                       const OutlierConfig& cfg_o, PriorBackend* prior = nullptr);

struct FilterResult {
  std::vector<int> inliers;
  std::vector<int> outliers;
  std::vector<OutlierTest> tests;
  /// Fixed-pose reconstruction over `inliers`.
  ReconstructionResult reconstruction;
};

/// Repeatedly tests the worst-fitting inlier. Views listed in
/// `known_outliers` start out excluded.
FilterResult filter_outliers(const ImageSet& images, const CameraList& cameras, const ReconstructionConfig& cfg_r,
                             const OutlierConfig& cfg_o, PriorBackend* prior = nullptr,
                             std::span<const int> known_outliers = {});

struct PoseSearchConfig {
  int n_candidates = 256;
  int refine_steps = 150;
  double lr_rotation = 2e-2;
  double lr_translation = 2e-2;
  double lr_final_fraction = 0.2;
};

struct PoseSearchResult {
  Camera camera;       // after continuous refinement
  Camera discrete;     // best lattice candidate
  int candidate = -1;  // its lattice index
};

/// Candidate selection by cumulative rank: rank_mse + rank_proxy, smaller is
/// better, ties to the lower index. Ranks start at 1.
int select_by_cumulative_rank(std::span<const double> mse, std::span<const double> proxy);

/// Photometric pose-only descent from `start`.
Camera refine_pose(const GaussianScene& scene, const Image& image, const Camera& start, const PoseSearchConfig& cfg);

/// Render-and-compare over a Fibonacci sphere of candidates at the median
/// inlier radius about the inliers' viewing center, then refinement.
PoseSearchResult correct_outlier_pose(const GaussianScene& scene, const Image& image, const Intrinsics& intrinsics,
                                      std::span<const Camera> inlier_cameras, const PoseSearchConfig& cfg = {});

struct StageTiming {
  std::string stage;
  double milliseconds = 0.0;
};

struct PipelineIteration {
  int k = 0;
  CameraList cameras;  // all views, index-aligned with the input
  std::vector<int> inliers;
  std::vector<int> outliers;
  std::vector<OutlierTest> tests;
};

struct PipelineReport {
  std::vector<PipelineIteration> iterations;
  std::vector<int> inliers;
  std::vector<int> outliers;
  std::vector<OutlierTest> evidence;  // the test that flagged each outlier
  std::map<int, Camera> corrected;
  CameraList initial_cameras;
  CameraList final_cameras;
  std::string scene_path;
  std::vector<StageTiming> timings;
};

struct PipelineResult {
  GaussianScene scene;
  CameraList cameras;
  PipelineReport report;
};

PipelineResult run_pipeline(const ImageSet& images, const CameraList& init_cameras, const ReconstructionConfig& cfg_r,
                            const OutlierConfig& cfg_o, PriorBackend* prior = nullptr,
                            const PoseSearchConfig& cfg_search = {});

}  // namespace ags
