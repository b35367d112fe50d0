#pragma once

// Independent reference implementations shared by the unit and acceptance
// suites: a per-pixel brute-force compositor and a central-difference
// gradient checker for the renderer.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ags/camera_geometry.hpp"
#include "ags/gaussian.hpp"
#include "ags/renderer.hpp"

namespace ags::testing {

inline Eigen::Quaterniond random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q;
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) { return random_quaternion(rng).toRotationMatrix(); }

inline Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return {random_rotation(rng), Eigen::Vector3d(n(rng), n(rng), n(rng))};
}

/// Small scene near the origin with moderate opacities, so no pixel reaches
/// the alpha clamp.
inline GaussianScene random_scene(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaussianScene scene;
  scene.background = Eigen::Vector3d(u(rng), u(rng), u(rng));
  for (int i = 0; i < n; ++i) {
    Gaussian3D g;
    g.mean = Eigen::Vector3d(u(rng), u(rng), u(rng)).array() * 1.2 - 0.6;
    for (int k = 0; k < 3; ++k) g.log_scale(k) = std::log(0.08 + 0.22 * u(rng));
    g.orientation = random_quaternion(rng);
    g.opacity_logit = -1.5 + 3.0 * u(rng);
    g.color = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 0.8 + Eigen::Vector3d::Constant(0.1);
    scene.gaussians.push_back(g);
  }
  return scene;
}

/// Camera about 3 units from the origin, looking at it from a random direction.
inline Camera random_camera(std::uint64_t seed, int width, int height) {
  std::mt19937_64 rng(seed ^ 0xC0FFEEULL);
  std::normal_distribution<double> n;
  Eigen::Vector3d dir(n(rng), n(rng), n(rng));
  dir.normalize();
  const Eigen::Vector3d target(0.1 * n(rng), 0.1 * n(rng), 0.1 * n(rng));
  return {look_at(target + 3.0 * dir, target), Intrinsics::FromFieldOfView(width, height, 50.0 * std::numbers::pi / 180.0)};
}

struct BruteForceImage {
  PixelArray rgb;
  Eigen::ArrayXd alpha;
};

/// Front-to-back compositing written out per pixel over every Gaussian, with
/// its own projection.
inline BruteForceImage brute_force_render(const GaussianScene& scene, const Camera& cam) {
  const Intrinsics& k = cam.intrinsics;
  struct Item {
    double depth;
    std::size_t index;
    Eigen::Vector2d mean;
    Eigen::Matrix2d inv_cov;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Gaussian3D& g = scene.gaussians[i];
    const Eigen::Vector3d p = cam.pose.rotation * g.mean + cam.pose.translation;
    if (p.z() < kNearPlane) continue;
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx / p.z(), 0, -k.fx * p.x() / (p.z() * p.z()), 0, k.fy / p.z(), -k.fy * p.y() / (p.z() * p.z());
    const Eigen::Matrix3d r = g.orientation.normalized().toRotationMatrix();
    const Eigen::Matrix3d sigma = r * g.log_scale.array().exp().square().matrix().asDiagonal() * r.transpose();
    const Eigen::Matrix2d cov =
        j * cam.pose.rotation * sigma * cam.pose.rotation.transpose() * j.transpose() + kScreenBlur * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d mean(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const double radius = std::sqrt(-2.0 * std::log(0.01) * es.eigenvalues().maxCoeff());
    if (mean.x() + radius < 0 || mean.x() - radius > k.width || mean.y() + radius < 0 || mean.y() - radius > k.height)
      continue;
    items.push_back({p.z(), i, mean, cov.inverse()});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.depth < b.depth; });

  BruteForceImage out{PixelArray(k.width * k.height, 3), Eigen::ArrayXd(k.width * k.height)};
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      Eigen::Vector3d c = Eigen::Vector3d::Zero();
      double t = 1.0;
      for (const Item& it : items) {
        const Eigen::Vector2d d = Eigen::Vector2d(x + 0.5, y + 0.5) - it.mean;
        const double d2 = d.dot(it.inv_cov * d);
        if (d2 > kSupportMahalanobisSq) continue;
        const double a = std::min(kMaxAlpha, scene.gaussians[it.index].opacity() * std::exp(-0.5 * d2));
        c += t * a * scene.gaussians[it.index].color;
        t *= 1.0 - a;
      }
      c += t * scene.background;
      out.rgb.row(y * k.width + x) = c.transpose().array();
      out.alpha(y * k.width + x) = 1.0 - t;
    }
  return out;
}

struct GradientCheck {
  int checked = 0;
  int failed = 0;
  double worst_rel = 0.0;  // over partials whose difference exceeds the abs floor
  std::string worst;
};

inline bool gradient_close(double analytic, double numeric, double rel_tol = 1e-3, double abs_floor = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  if (diff < abs_floor) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) < rel_tol;
}

/// Compares every partial of sum(weights .* render) against central
/// differences with step 1e-4 scaled by the parameter magnitude.
inline GradientCheck check_render_gradients(const GaussianScene& scene, const Camera& cam, const PixelArray& weights,
                                            double rel_tol = 1e-3, double abs_floor = 1e-6) {
  const RenderGradients analytic = render_with_gradients(scene, cam, weights);
  const auto objective = [&](const GaussianScene& s, const Camera& c) { return (render(s, c).rgb * weights).sum(); };

  GradientCheck out;
  const auto compare = [&](double a, double n, const std::string& what) {
    ++out.checked;
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-300});
    if (!gradient_close(a, n, rel_tol, abs_floor)) ++out.failed;
    if (std::abs(a - n) >= abs_floor && rel > out.worst_rel) {
      out.worst_rel = rel;
      out.worst = what + " analytic " + std::to_string(a) + " numeric " + std::to_string(n);
    }
  };
  const auto central = [&](auto&& perturb, double x) {
    const double h = 1e-4 * std::max(1.0, std::abs(x));
    GaussianScene plus = scene, minus = scene;
    Camera cp = cam, cm = cam;
    perturb(plus, cp, h);
    perturb(minus, cm, -h);
    return (objective(plus, cp) - objective(minus, cm)) / (2.0 * h);
  };

  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Gaussian3D& g = scene.gaussians[i];
    const GaussianGradient& a = analytic.gaussians[i];
    const std::string tag = "gaussian " + std::to_string(i) + " ";
    for (int k = 0; k < 3; ++k) {
      compare(a.mean(k), central([&](GaussianScene& s, Camera&, double h) { s.gaussians[i].mean(k) += h; }, g.mean(k)),
              tag + "mean " + std::to_string(k));
      compare(a.log_scale(k),
              central([&](GaussianScene& s, Camera&, double h) { s.gaussians[i].log_scale(k) += h; }, g.log_scale(k)),
              tag + "log_scale " + std::to_string(k));
      compare(a.orientation(k),
              central(
                  [&](GaussianScene& s, Camera&, double h) {
                    Eigen::Vector3d d = Eigen::Vector3d::Zero();
                    d(k) = h;
                    const Eigen::Matrix3d r = g.orientation.toRotationMatrix() * so3_exp(d);
                    s.gaussians[i].orientation = Eigen::Quaterniond(r);
                  },
                  0.0),
              tag + "orientation " + std::to_string(k));
      compare(a.color(k), central([&](GaussianScene& s, Camera&, double h) { s.gaussians[i].color(k) += h; }, g.color(k)),
              tag + "color " + std::to_string(k));
    }
    compare(a.opacity_logit,
            central([&](GaussianScene& s, Camera&, double h) { s.gaussians[i].opacity_logit += h; }, g.opacity_logit),
            tag + "opacity_logit");
  }
  const Eigen::Matrix<double, 6, 1> pose_grad = analytic.pose.vector();
  for (int k = 0; k < 6; ++k)
    compare(pose_grad(k),
            central(
                [&](GaussianScene&, Camera& c, double h) {
                  Eigen::Matrix<double, 6, 1> e = Eigen::Matrix<double, 6, 1>::Zero();
                  e(k) = h;
                  c.pose = se3_exp(Twistd::FromVector(e)) * c.pose;
                },
                0.0),
            "pose " + std::to_string(k));
  return out;
}

inline PixelArray random_weights(std::uint64_t seed, Eigen::Index rows) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  PixelArray w(rows, 3);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (int c = 0; c < 3; ++c) w(r, c) = n(rng);
  return w;
}

}  // namespace ags::testing
