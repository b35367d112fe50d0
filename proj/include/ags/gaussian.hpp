#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <vector>

namespace ags {

inline constexpr double kMinLogScale = -13.815510557964274;  // ln 1e-6
inline constexpr double kMaxLogScale = 6.907755278982137;    // ln 1e3

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// One anisotropic 3D Gaussian with view-independent color.
struct Gaussian3D {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Constant(-2.0);
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();  // w, x, y, z
  double opacity_logit = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Constant(0.5);

  double opacity() const { return sigmoid(opacity_logit); }
  Eigen::Vector3d scale() const { return log_scale.array().exp(); }

  /// Sigma = R S S^T R^T
  Eigen::Matrix3d covariance() const {
    const Eigen::Matrix3d m = orientation.toRotationMatrix() * scale().asDiagonal();
    return m * m.transpose();
  }
};

struct GaussianScene {
  std::vector<Gaussian3D> gaussians;
  Eigen::Vector3d background = Eigen::Vector3d::Ones();

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
};

/// Restores element invariants after a raw parameter update: unit quaternion,
/// clamped log-scales and colors.
inline void enforce_invariants(Gaussian3D& g) {
  g.orientation.normalize();
  g.log_scale = g.log_scale.cwiseMax(kMinLogScale).cwiseMin(kMaxLogScale);
  g.color = g.color.cwiseMax(0.0).cwiseMin(1.0);
  g.opacity_logit = std::clamp(g.opacity_logit, -30.0, 30.0);
}

}  // namespace ags
