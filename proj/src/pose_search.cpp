#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ags/adam.hpp"
#include "ags/metrics.hpp"
#include "ags/optimization.hpp"

namespace ags {

namespace {

std::vector<int> ranks(std::span<const double> values) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
  });
  std::vector<int> rank(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;
  return rank;
}

Eigen::Vector3d opacity_weighted_center(const GaussianScene& scene) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  double weight = 0.0;
  for (const Gaussian3D& g : scene.gaussians) {
    sum += g.opacity() * g.mean;
    weight += g.opacity();
  }
  return weight > 0.0 ? Eigen::Vector3d(sum / weight) : Eigen::Vector3d::Zero();
}

}  // namespace

int select_by_cumulative_rank(std::span<const double> mse, std::span<const double> proxy) {
  if (mse.empty() || mse.size() != proxy.size()) throw std::invalid_argument("select_by_cumulative_rank: bad input");
  const auto rank_mse = ranks(mse), rank_proxy = ranks(proxy);
  int best = 0;
  for (std::size_t i = 1; i < mse.size(); ++i)
    if (rank_mse[i] + rank_proxy[i] < rank_mse[static_cast<std::size_t>(best)] + rank_proxy[static_cast<std::size_t>(best)])
      best = static_cast<int>(i);
  return best;
}

Camera refine_pose(const GaussianScene& scene, const Image& image, const Camera& start, const PoseSearchConfig& cfg) {
  Camera cam = start, best = start;
  const Eigen::Vector3d pivot = opacity_weighted_center(scene);
  double best_loss = std::numeric_limits<double>::infinity();
  Adam adam(6);
  Eigen::ArrayXd rates(6);
  rates << Eigen::Array3d::Constant(cfg.lr_rotation), Eigen::Array3d::Constant(cfg.lr_translation);
  for (int step = 0; step <= cfg.refine_steps; ++step) {
    Rasterizer raster(scene, cam);
    PixelArray grad;
    const double loss = photometric_loss(raster.image(), image, 1.0, &grad);
    if (loss < best_loss) {
      best_loss = loss;
      best = cam;
    }
    if (step == cfg.refine_steps) break;
    const Eigen::Vector3d pivot_cam = cam.pose * pivot;
    const Twistd g = pivot_gradient(raster.backward(grad).pose, pivot_cam);
    Eigen::ArrayXd flat(6);
    flat << g.omega.array(), g.v.array();
    const double decay = std::pow(cfg.lr_final_fraction, static_cast<double>(step) / cfg.refine_steps);
    cam.pose = apply_pivot_twist(cam.pose, Twistd::FromVector(adam.step(flat, rates * decay).matrix()), pivot_cam);
  }
  return best;
}

PoseSearchResult correct_outlier_pose(const GaussianScene& scene, const Image& image, const Intrinsics& intrinsics,
                                      std::span<const Camera> inlier_cameras, const PoseSearchConfig& cfg) {
  if (scene.empty()) throw std::invalid_argument("correct_outlier_pose: empty scene");
  if (inlier_cameras.empty()) throw std::invalid_argument("correct_outlier_pose: no inlier cameras");
  if (cfg.n_candidates < 1) throw std::invalid_argument("correct_outlier_pose: need at least one candidate");
  if (intrinsics.width != image.width || intrinsics.height != image.height)
    throw std::invalid_argument("correct_outlier_pose: intrinsics do not match the image");

  const Eigen::Vector3d center = viewing_center(inlier_cameras);
  std::vector<double> radii;
  for (const Camera& c : inlier_cameras) radii.push_back((c.pose.center() - center).norm());
  std::nth_element(radii.begin(), radii.begin() + static_cast<std::ptrdiff_t>(radii.size() / 2), radii.end());
  double radius = radii[radii.size() / 2];
  if (radii.size() % 2 == 0) {
    const double lower = *std::max_element(radii.begin(), radii.begin() + static_cast<std::ptrdiff_t>(radii.size() / 2));
    radius = 0.5 * (radius + lower);
  }

  const std::vector<Pose> candidates = sample_sphere_poses(cfg.n_candidates, radius, center);
  std::vector<double> mse(candidates.size()), proxy(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const RenderedImage r = render(scene, Camera{candidates[i], intrinsics});
    mse[i] = (r.rgb - image.rgb).square().mean();
    proxy[i] = perceptual_proxy(r.rgb, image.rgb, image.width, image.height);
  }

  PoseSearchResult out;
  out.candidate = select_by_cumulative_rank(mse, proxy);
  out.discrete = Camera{candidates[static_cast<std::size_t>(out.candidate)], intrinsics};
  out.camera = refine_pose(scene, image, out.discrete, cfg);
  return out;
}

}  // namespace ags
