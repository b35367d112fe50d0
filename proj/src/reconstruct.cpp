#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ags/adam.hpp"
#include "ags/errors.hpp"
#include "ags/metrics.hpp"
#include "ags/optimization.hpp"

namespace ags {

namespace {

constexpr int kParamsPerGaussian = 13;  // mean 3, log-scale 3, orientation tangent 3, opacity 1, color 3

void accumulate(const RenderGradients& grads, Eigen::ArrayXd& flat) {
  for (std::size_t i = 0; i < grads.gaussians.size(); ++i) {
    const GaussianGradient& g = grads.gaussians[i];
    auto block = flat.segment(static_cast<Eigen::Index>(i) * kParamsPerGaussian, kParamsPerGaussian);
    block.segment<3>(0) += g.mean.array();
    block.segment<3>(3) += g.log_scale.array();
    block.segment<3>(6) += g.orientation.array();
    block(9) += g.opacity_logit;
    block.segment<3>(10) += g.color.array();
  }
}

void apply_update(GaussianScene& scene, const Eigen::ArrayXd& delta) {
  for (std::size_t i = 0; i < scene.size(); ++i) {
    Gaussian3D& g = scene.gaussians[i];
    const auto block = delta.segment(static_cast<Eigen::Index>(i) * kParamsPerGaussian, kParamsPerGaussian);
    g.mean += block.segment<3>(0).matrix();
    g.log_scale += block.segment<3>(3).matrix();
    g.orientation = g.orientation * Eigen::Quaterniond(so3_exp(Eigen::Vector3d(block.segment<3>(6).matrix())));
    g.opacity_logit += block(9);
    g.color += block.segment<3>(10).matrix();
    enforce_invariants(g);
  }
}

Eigen::ArrayXd scene_rates(const ReconstructionConfig& cfg, std::size_t n) {
  Eigen::ArrayXd block(kParamsPerGaussian);
  block << cfg.lr_mean, cfg.lr_mean, cfg.lr_mean, cfg.lr_log_scale, cfg.lr_log_scale, cfg.lr_log_scale,
      cfg.lr_orientation, cfg.lr_orientation, cfg.lr_orientation, cfg.lr_opacity, cfg.lr_color, cfg.lr_color,
      cfg.lr_color;
  return block.replicate(static_cast<Eigen::Index>(n), 1);
}

Eigen::ArrayXd pose_gradient(const Twistd& g, const Eigen::Vector3d& pivot) {
  const Twistd p = pivot_gradient(g, pivot);
  Eigen::ArrayXd out(6);
  out << p.omega.array(), p.v.array();
  return out;
}

PixelArray standard_normal(Eigen::Index rows, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PixelArray out(rows, 3);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = normal(rng);
  return out;
}

Eigen::Vector3d random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d d;
  do {
    d = {normal(rng), normal(rng), normal(rng)};
  } while (d.norm() < 1e-9);
  return d.normalized();
}

// Moves the scene and all cameras by the rigid transform that puts camera 0
// back at `anchor`. All poses move freely during optimization; freezing camera
// 0 instead forces the whole configuration to rotate slowly into its frame.
void reanchor(GaussianScene& scene, CameraList& cams, const Camera& anchor) {
  const Pose g = anchor.pose.inverse() * cams[0].pose;  // world -> anchored world
  const Pose g_inv = g.inverse();
  const Eigen::Quaterniond q(g.rotation);
  for (Gaussian3D& gauss : scene.gaussians) {
    gauss.mean = g * gauss.mean;
    gauss.orientation = (q * gauss.orientation).normalized();
  }
  for (Camera& c : cams) {
    c.pose = c.pose * g_inv;
    c.pose.rotation = orthonormalize(c.pose.rotation);
  }
  cams[0] = anchor;
}

std::string describe(int step, std::size_t view, const Camera& cam, const GaussianScene& scene) {
  std::ostringstream os;
  os << "step " << step << ", view " << view << ", " << scene.size() << " gaussians, camera center "
     << cam.pose.center().transpose();
  return os.str();
}

}  // namespace

void ReconstructionConfig::validate() const {
  if (steps < 0) throw ValidationError("steps must be >= 0");
  if (n_gaussians < 1) throw ValidationError("n_gaussians must be >= 1");
  for (auto [name, v] : {std::pair{"lr_mean", lr_mean}, {"lr_log_scale", lr_log_scale},
                         {"lr_orientation", lr_orientation}, {"lr_opacity", lr_opacity}, {"lr_color", lr_color},
                         {"lr_pose_rotation", lr_pose_rotation}, {"lr_pose_translation", lr_pose_translation},
                         {"lr_final_fraction", lr_final_fraction}})
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be positive");
  if (pose_warmup_steps < 0) throw ValidationError("pose_warmup_steps must be >= 0");
  if (!(blur_sigma_px >= 0.0)) throw ValidationError("blur_sigma_px must be >= 0");
  if (!(blur_anneal_fraction > 0.0)) throw ValidationError("blur_anneal_fraction must be positive");
  if (views_per_step < 1) throw ValidationError("views_per_step must be >= 1");
  if (!(lambda_photo >= 0.0) || !(lambda_sds >= 0.0)) throw ValidationError("loss weights must be non-negative");
}

GaussianScene initial_scene(int n_gaussians, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const double spacing = std::cbrt(4.0 / 3.0 * std::numbers::pi / n_gaussians);
  GaussianScene scene;
  scene.gaussians.reserve(static_cast<std::size_t>(n_gaussians));
  while (static_cast<int>(scene.size()) < n_gaussians) {
    const Eigen::Vector3d p(uni(rng), uni(rng), uni(rng));
    if (p.squaredNorm() > 1.0) continue;
    Gaussian3D g;
    g.mean = p;
    g.log_scale.setConstant(std::log(0.5 * spacing));
    g.opacity_logit = -2.0;
    g.color = Eigen::Vector3d(0.5 + 0.1 * uni(rng), 0.5 + 0.1 * uni(rng), 0.5 + 0.1 * uni(rng));
    scene.gaussians.push_back(g);
  }
  return scene;
}

double photometric_loss(const RenderedImage& rendered, const Image& target, double lambda, PixelArray* grad) {
  if (rendered.rgb.rows() != target.rgb.rows()) throw std::invalid_argument("photometric_loss: shape mismatch");
  const Eigen::Index n = target.pixel_count();
  const Eigen::ArrayXd mask =
      ((target.alpha > kMaskThreshold) || (rendered.alpha > kMaskThreshold)).cast<double>();
  const PixelArray residual = (rendered.rgb - target.rgb).colwise() * mask;
  const double scale = lambda / (3.0 * static_cast<double>(n));
  if (grad) *grad = (2.0 * scale) * residual;
  return scale * residual.square().sum();
}

PixelArray gaussian_blur(const PixelArray& pixels, int width, int height, double sigma) {
  if (pixels.rows() != static_cast<Eigen::Index>(width) * height) throw std::invalid_argument("gaussian_blur: shape mismatch");
  if (!(sigma > 0.0)) return pixels;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  Eigen::ArrayXd kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) kernel(k + radius) = std::exp(-0.5 * k * k / (sigma * sigma));
  kernel /= kernel.sum();
  PixelArray rows = PixelArray::Zero(pixels.rows(), 3), out = PixelArray::Zero(pixels.rows(), 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int k = std::max(-radius, -x); k <= std::min(radius, width - 1 - x); ++k)
        rows.row(y * width + x) += kernel(k + radius) * pixels.row(y * width + x + k);
  for (int y = 0; y < height; ++y)
    for (int k = std::max(-radius, -y); k <= std::min(radius, height - 1 - y); ++k)
      out.middleRows(y * width, width) += kernel(k + radius) * rows.middleRows((y + k) * width, width);
  return out;
}

double blurred_photometric_loss(const RenderedImage& rendered, const Image& target, double lambda, double sigma,
                                PixelArray* grad) {
  if (!(sigma > 0.0)) return photometric_loss(rendered, target, lambda, grad);
  if (rendered.rgb.rows() != target.rgb.rows()) throw std::invalid_argument("photometric_loss: shape mismatch");
  const PixelArray residual = gaussian_blur(rendered.rgb - target.rgb, target.width, target.height, sigma);
  const double scale = lambda / (3.0 * static_cast<double>(target.pixel_count()));
  if (grad) *grad = (2.0 * scale) * gaussian_blur(residual, target.width, target.height, sigma);
  return scale * residual.square().sum();
}

Eigen::Vector3d viewing_center(std::span<const Camera> cameras) {
  if (cameras.empty()) throw std::invalid_argument("viewing_center: no cameras");
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero(), centroid = Eigen::Vector3d::Zero();
  for (const Camera& cam : cameras) {
    const Eigen::Vector3d c = cam.pose.center();
    const Eigen::Vector3d d = cam.pose.rotation.row(2).transpose();
    const Eigen::Matrix3d proj = Eigen::Matrix3d::Identity() - d * d.transpose();
    a += proj;
    b += proj * c;
    centroid += c;
  }
  centroid /= static_cast<double>(cameras.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(a);
  if (eig.eigenvalues()(0) < 1e-3 * static_cast<double>(cameras.size())) return centroid;
  return a.ldlt().solve(b);
}

ReconstructionResult reconstruct(const ImageSet& images, const CameraList& cameras, const ReconstructionConfig& cfg,
                                 PriorBackend* prior) {
  cfg.validate();
  images.validate();
  if (images.size() < 2) throw std::invalid_argument("reconstruct: need at least 2 images");
  if (images.size() != cameras.size()) throw std::invalid_argument("reconstruct: images and cameras differ in count");
  if (cfg.sds_enabled && prior == nullptr) throw std::invalid_argument("reconstruct: SDS enabled without a prior");
  for (const Camera& cam : cameras) {
    cam.intrinsics.validate();
    if (cam.intrinsics.width != images[0].width || cam.intrinsics.height != images[0].height)
      throw std::invalid_argument("reconstruct: intrinsics do not match the image size");
  }

  ReconstructionResult out{initial_scene(cfg.n_gaussians, cfg.seed), cameras, {}};
  if (cfg.steps == 0) return out;

  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  const std::size_t n_views = images.size();
  GaussianScene& scene = out.scene;
  CameraList& cams = out.cameras;

  Adam scene_adam(static_cast<Eigen::Index>(scene.size()) * kParamsPerGaussian);
  const Eigen::ArrayXd base_rates = scene_rates(cfg, scene.size());
  std::vector<Adam> pose_adam(n_views, Adam(6));
  Eigen::ArrayXd base_pose_rates(6);
  base_pose_rates << Eigen::Array3d::Constant(cfg.lr_pose_rotation), Eigen::Array3d::Constant(cfg.lr_pose_translation);

  const NoiseSchedule schedule = NoiseSchedule::Linear();
  const Eigen::Vector3d pivot = viewing_center(cameras);
  std::vector<std::size_t> order;
  out.photometric_loss.reserve(static_cast<std::size_t>(cfg.steps));

  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.views_per_step), n_views);
  std::vector<std::size_t> views;
  std::vector<Twistd> pose_grads;

  for (int step = 0; step < cfg.steps; ++step) {
    const double progress = static_cast<double>(step) / cfg.steps;
    views.clear();
    while (views.size() < batch) {
      if (order.empty()) {
        order.resize(n_views);
        for (std::size_t i = 0; i < n_views; ++i) order[i] = n_views - 1 - i;
        std::shuffle(order.begin(), order.end(), rng);
      }
      views.push_back(order.back());
      order.pop_back();
    }

    const double sigma = cfg.blur_sigma_px * std::max(0.0, 1.0 - progress / cfg.blur_anneal_fraction);
    Eigen::ArrayXd flat = Eigen::ArrayXd::Zero(scene_adam.size());
    pose_grads.clear();
    double loss = 0.0;
    for (const std::size_t view : views) {
      Rasterizer raster(scene, cams[view]);
      PixelArray grad_rgb;
      const double l = blurred_photometric_loss(raster.image(), images[view], cfg.lambda_photo, sigma, &grad_rgb);
      if (!std::isfinite(l))
        throw NonFiniteLossError("reconstruct: non-finite photometric loss", describe(step, view, cams[view], scene));
      loss += l / static_cast<double>(batch);
      const RenderGradients photo = raster.backward(grad_rgb);
      accumulate(photo, flat);
      pose_grads.push_back(photo.pose);
    }
    out.photometric_loss.push_back(loss);

    if (cfg.sds_enabled) {
      const Eigen::Vector3d center = viewing_center(cams);
      double radius = 0.0;
      for (const Camera& c : cams) radius += (c.pose.center() - center).norm();
      radius /= static_cast<double>(n_views);
      const Camera novel{look_at(center + radius * random_direction(rng), center), cams[0].intrinsics};
      Rasterizer novel_raster(scene, novel);
      const int t = sample_timestep(rng, progress, schedule.steps());
      const PixelArray eps = standard_normal(novel_raster.image().rgb.rows(), rng);
      const PixelArray sds = multiview_sds_gradient(novel_raster.image().rgb, novel, images.images, cams, *prior,
                                                    schedule, t, eps, cfg.lambda_sds);
      if (!sds.allFinite())
        throw NonFiniteLossError("reconstruct: non-finite SDS gradient", describe(step, 0, novel, scene));
      accumulate(novel_raster.backward(sds), flat);
    }

    if (!flat.allFinite())
      throw NonFiniteLossError("reconstruct: non-finite scene gradient", describe(step, views.front(), cams[views.front()], scene));
    const double decay = std::pow(cfg.lr_final_fraction, progress);
    apply_update(scene, scene_adam.step(flat, base_rates * decay));

    if (!cfg.pose_opt_enabled || step < cfg.pose_warmup_steps) continue;
    for (std::size_t b = 0; b < views.size(); ++b) {
      const std::size_t view = views[b];
      const Eigen::Vector3d pivot_cam = cams[view].pose * pivot;
      const Eigen::ArrayXd g = pose_gradient(pose_grads[b], pivot_cam);
      if (!g.allFinite())
        throw NonFiniteLossError("reconstruct: non-finite pose gradient", describe(step, view, cams[view], scene));
      const Eigen::ArrayXd d = pose_adam[view].step(g, base_pose_rates);
      cams[view].pose = apply_pivot_twist(cams[view].pose, Twistd::FromVector(d.matrix()), pivot_cam);
    }
  }
  if (cfg.pose_opt_enabled) reanchor(scene, cams, cameras[0]);
  return out;
}

std::vector<double> per_view_errors(const GaussianScene& scene, const ImageSet& images, std::span<const Camera> cameras,
                                    ErrorMetric metric) {
  if (images.size() == 0) throw std::invalid_argument("reprojection_error: empty image set");
  if (images.size() != cameras.size()) throw std::invalid_argument("reprojection_error: images and cameras differ");
  std::vector<double> errors;
  errors.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const RenderedImage r = render(scene, cameras[i]);
    if (metric == ErrorMetric::kMse) {
      require_same_shape(r.rgb, images[i].rgb, "reprojection_error");
      errors.push_back((r.rgb - images[i].rgb).square().mean());
    } else {
      errors.push_back(perceptual_proxy(r.rgb, images[i].rgb, images[i].width, images[i].height));
    }
  }
  return errors;
}

double reprojection_error(const GaussianScene& scene, const ImageSet& images, std::span<const Camera> cameras,
                          ErrorMetric metric) {
  const auto errors = per_view_errors(scene, images, cameras, metric);
  double sum = 0.0;
  for (double e : errors) sum += e;
  return sum / static_cast<double>(errors.size());
}

}  // namespace ags
