#include "ags/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "ags/errors.hpp"
#include "ags/renderer.hpp"

namespace ags {

namespace {

constexpr double kDegree = std::numbers::pi / 180.0;

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d d;
  do {
    d = {normal(rng), normal(rng), normal(rng)};
  } while (d.norm() < 1e-9);
  return d.normalized();
}

Eigen::Vector3d clip_to_ball(const Eigen::Vector3d& p, double radius) {
  const double n = p.norm();
  return n > radius ? Eigen::Vector3d(p * (radius / n)) : p;
}

Eigen::Quaterniond random_orientation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q;
}

/// Hue in [0, 1) to a saturated RGB color.
Eigen::Vector3d hue_color(double hue) {
  Eigen::Vector3d c;
  for (int k = 0; k < 3; ++k) {
    const double phase = hue + k / 3.0;
    c(k) = 0.5 + 0.45 * std::cos(2.0 * std::numbers::pi * phase);
  }
  return c;
}

}  // namespace

SceneStyle parse_scene_style(const std::string& name) {
  if (name == "blob") return SceneStyle::kBlob;
  if (name == "cluster") return SceneStyle::kCluster;
  if (name == "ring") return SceneStyle::kRing;
  throw ValidationError("unknown scene style \"" + name + "\" (expected blob, cluster or ring)");
}

std::string to_string(SceneStyle style) {
  switch (style) {
    case SceneStyle::kBlob:
      return "blob";
    case SceneStyle::kCluster:
      return "cluster";
    case SceneStyle::kRing:
      return "ring";
  }
  return "cluster";
}

GaussianScene generate_scene(std::uint64_t seed, int n_gaussians, SceneStyle style) {
  if (n_gaussians < 1) throw std::invalid_argument("generate_scene: n_gaussians must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  constexpr int kClusters = 6;
  std::vector<Eigen::Vector3d> centers, colors;
  for (int c = 0; c < kClusters; ++c) {
    centers.push_back(0.6 * std::cbrt(uni(rng)) * random_unit(rng));
    colors.push_back(hue_color((c + 0.3 * uni(rng)) / kClusters));
  }
  const Eigen::Vector3d ring_axis = random_unit(rng);
  const Eigen::Quaterniond ring_frame = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), ring_axis);

  GaussianScene scene;
  scene.gaussians.reserve(static_cast<std::size_t>(n_gaussians));
  for (int i = 0; i < n_gaussians; ++i) {
    Gaussian3D g;
    g.orientation = random_orientation(rng);
    g.opacity_logit = 1.0 + 2.0 * uni(rng);
    for (int k = 0; k < 3; ++k) g.log_scale(k) = std::log(0.03 + 0.05 * uni(rng));
    switch (style) {
      case SceneStyle::kBlob: {
        const Eigen::Vector3d p(0.35 * normal(rng), 0.3 * normal(rng), 0.25 * normal(rng));
        g.mean = clip_to_ball(p, 0.95);
        g.color = (Eigen::Vector3d::Constant(0.5) + 0.45 * g.mean.normalized().cwiseProduct(Eigen::Vector3d(1.0, -1.0, 1.0)));
        break;
      }
      case SceneStyle::kCluster: {
        const int c = static_cast<int>(uni(rng) * kClusters) % kClusters;
        const Eigen::Vector3d offset(0.13 * normal(rng), 0.13 * normal(rng), 0.13 * normal(rng));
        g.mean = clip_to_ball(centers[static_cast<std::size_t>(c)] + offset, 0.95);
        g.color = colors[static_cast<std::size_t>(c)] + 0.04 * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
        break;
      }
      case SceneStyle::kRing: {
        const double angle = 2.0 * std::numbers::pi * uni(rng);
        const Eigen::Vector3d local(0.6 * std::cos(angle) + 0.08 * normal(rng), 0.6 * std::sin(angle) + 0.08 * normal(rng),
                                    0.08 * normal(rng));
        g.mean = clip_to_ball(ring_frame * local, 0.95);
        g.color = hue_color(angle / (2.0 * std::numbers::pi));
        break;
      }
    }
    enforce_invariants(g);
    scene.gaussians.push_back(g);
  }
  return scene;
}

void CaptureOptions::validate() const {
  if (n_views < 2) throw ValidationError("n_views must be >= 2");
  if (width < 1 || height < 1) throw ValidationError("image size must be positive");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ValidationError("fov_deg must be in (0, 180)");
  if (!(radius > 1.0)) throw ValidationError("radius must exceed the unit scene bound");
  if (!(rot_noise_deg >= 0.0) || !(trans_noise >= 0.0)) throw ValidationError("noise levels must be non-negative");
  if (n_outliers < 0 || n_outliers >= n_views) throw ValidationError("n_outliers must be in [0, n_views)");
  if (!(outlier_min_deg > 0.0 && outlier_min_deg <= outlier_max_deg && outlier_max_deg < 180.0))
    throw ValidationError("outlier angle range must satisfy 0 < min <= max < 180");
}

void quantize(Image& image) {
  image.rgb = (image.rgb.cwiseMax(0.0).cwiseMin(1.0) * 255.0).round() / 255.0;
  image.alpha = (image.alpha.cwiseMax(0.0).cwiseMin(1.0) * 255.0).round() / 255.0;
}

Capture generate_capture(const GaussianScene& scene, const CaptureOptions& options) {
  options.validate();
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Capture cap;
  cap.options = options;
  const Intrinsics intrinsics = Intrinsics::FromFieldOfView(options.width, options.height, options.fov_deg * kDegree);

  // Jittered lattice: a random global rotation plus a per-view tangent jitter
  // of a quarter of the mean lattice spacing.
  const Eigen::Matrix3d spin = so3_exp(Eigen::Vector3d(random_unit(rng) * (std::numbers::pi * uni(rng))));
  const double spacing = std::sqrt(4.0 * std::numbers::pi / options.n_views);
  for (const Eigen::Vector3d& d : fibonacci_directions(options.n_views)) {
    Eigen::Vector3d dir = spin * d;
    const Eigen::Vector3d jitter = random_unit(rng).cross(dir) * (0.25 * spacing * uni(rng));
    dir = (dir + jitter).normalized();
    cap.gt_cameras.push_back({look_at(options.radius * dir, Eigen::Vector3d::Zero()), intrinsics});
  }

  std::vector<int> order(static_cast<std::size_t>(options.n_views));
  for (int i = 0; i < options.n_views; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_outlier(static_cast<std::size_t>(options.n_views), false);
  for (int i = 0; i < options.n_outliers; ++i) is_outlier[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  const double rot_sigma = options.rot_noise_deg * kDegree / std::sqrt(3.0);
  const double trans_sigma = options.trans_noise / std::sqrt(3.0);
  for (int i = 0; i < options.n_views; ++i) {
    const Camera& gt = cap.gt_cameras[static_cast<std::size_t>(i)];
    Camera init = gt;
    ViewRecord rec;
    // Draws happen for every view so outlier selection does not shift the
    // noise of the others.
    Twistd noise;
    do {
      noise.omega = rot_sigma * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
    } while (noise.omega.norm() >= options.outlier_min_deg * kDegree);
    noise.v = trans_sigma * Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
    const Eigen::Vector3d axis = random_unit(rng);
    const double angle = (options.outlier_min_deg + (options.outlier_max_deg - options.outlier_min_deg) * uni(rng)) * kDegree;

    if (is_outlier[static_cast<std::size_t>(i)]) {
      init.pose = gt.pose * rotation_about<double>(so3_exp(Eigen::Vector3d(axis * angle)), Eigen::Vector3d::Zero());
      rec.outlier = true;
    } else {
      // Zero noise leaves the ground-truth pose untouched bit for bit.
      if (!noise.vector().isZero(0.0)) init.pose = apply_twist(gt.pose, noise);
      rec.translation_error = noise.v.norm();
    }
    rec.rotation_error_deg = geodesic_angle(init.pose.rotation, gt.pose.rotation) / kDegree;
    cap.init_cameras.push_back(init);
    cap.views.push_back(rec);

    Image im = render(scene, gt).to_image();
    quantize(im);
    cap.images.images.push_back(std::move(im));
  }
  return cap;
}

}  // namespace ags
