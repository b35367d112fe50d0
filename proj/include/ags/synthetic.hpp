#pragma once

// Seeded ground-truth scenes and multi-view captures with perturbed initial
// poses and planted outliers.

#include <cstdint>
#include <string>
#include <vector>

#include "ags/camera_geometry.hpp"
#include "ags/gaussian.hpp"
#include "ags/image.hpp"

namespace ags {

enum class SceneStyle { kBlob, kCluster, kRing };

SceneStyle parse_scene_style(const std::string& name);
std::string to_string(SceneStyle style);

/// Deterministic scene inside the unit sphere.
GaussianScene generate_scene(std::uint64_t seed, int n_gaussians, SceneStyle style);

struct CaptureOptions {
  int n_views = 8;
  int width = 64;
  int height = 64;
  double fov_deg = 50.0;
  double radius = 2.5;
  double rot_noise_deg = 5.0;  // RMS angle of the rotation noise
  double trans_noise = 0.0;    // RMS norm of the translation noise
  int n_outliers = 0;
  double outlier_min_deg = 45.0;
  double outlier_max_deg = 90.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ViewRecord {
  bool outlier = false;
  double rotation_error_deg = 0.0;  // geodesic angle between init and gt rotations
  double translation_error = 0.0;   // norm of the injected translation
};

struct Capture {
  CaptureOptions options;
  ImageSet images;
  CameraList gt_cameras;
  CameraList init_cameras;
  std::vector<ViewRecord> views;
};

/// Renders the scene from a jittered Fibonacci lattice of cameras, quantizes the
/// images to 8 bits and perturbs the poses. Outlier views are rotated about
/// the world origin by a uniform angle in [outlier_min_deg, outlier_max_deg]
/// about a random axis.
Capture generate_capture(const GaussianScene& scene, const CaptureOptions& options);

/// Rounds every channel to the nearest multiple of 1/255.
void quantize(Image& image);

}  // namespace ags
