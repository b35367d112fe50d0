#pragma once

// CPU splat rasterizer with an analytic vector-Jacobian product for both the
// Gaussian parameters and the camera pose.

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "ags/camera_geometry.hpp"
#include "ags/gaussian.hpp"
#include "ags/image.hpp"

namespace ags {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kScreenBlur = 0.3;  // px^2 added to the projected covariance
inline constexpr double kMaxAlpha = 0.999;
// Squared Mahalanobis radius of the 99% ellipse of a 2D Gaussian (-2 ln 0.01).
inline constexpr double kCullMahalanobisSq = 9.210340371976184;
// Per-pixel support. The kernel is exp(-d^2/2) minus its value at the support
// boundary, so alpha falls continuously to zero there instead of jumping by
// 1.5e-8 of the peak, a jump that central differences would see.
inline constexpr double kSupportMahalanobisSq = 36.0;
inline const double kKernelFloor = std::exp(-0.5 * kSupportMahalanobisSq);

struct ProjectedGaussian {
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;
  double depth = 0.0;
};

/// EWA projection. Returns nullopt when culled (behind the near plane, or the
/// 99% ellipse lies entirely outside the image).
std::optional<ProjectedGaussian> project_gaussian(const Gaussian3D& g, const Camera& cam);

struct RenderedImage {
  int width = 0;
  int height = 0;
  PixelArray rgb;
  Eigen::ArrayXd alpha;
  Eigen::ArrayXd expected_depth;

  Image to_image() const {
    Image im(width, height, rgb);
    im.alpha = alpha;
    return im;
  }
};

/// Partials with respect to one Gaussian. `orientation` is taken in the
/// 3-dimensional tangent R -> R exp([delta]x) of the rotation.
struct GaussianGradient {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Vector3d orientation = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

struct RenderGradients {
  std::vector<GaussianGradient> gaussians;  // index-aligned with the scene
  Twistd pose;                              // left-multiplicative twist at the current pose
};

/// Forward pass state for one (scene, camera) pair. Keeps what the backward
/// pass needs so a training step renders once and differentiates once.
class Rasterizer {
 public:
  Rasterizer(const GaussianScene& scene, const Camera& camera);
  ~Rasterizer();
  Rasterizer(Rasterizer&&) noexcept;
  Rasterizer& operator=(Rasterizer&&) noexcept;

  const RenderedImage& image() const { return image_; }

  /// Gradient of sum(grad_rgb .* rgb) with respect to every parameter.
  RenderGradients backward(const PixelArray& grad_rgb) const;

 private:
  struct State;
  const GaussianScene* scene_;
  Camera camera_;
  RenderedImage image_;
  std::unique_ptr<State> state_;
};

RenderedImage render(const GaussianScene& scene, const Camera& camera);

RenderGradients render_with_gradients(const GaussianScene& scene, const Camera& camera, const PixelArray& grad_image);

/// Worker count used to shard pixel tiles. Results do not depend on it.
void set_render_threads(int threads);
int render_threads();

}  // namespace ags
