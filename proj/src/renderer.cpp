#include "ags/renderer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace ags {
namespace {

constexpr int kTileSize = 8;

std::atomic<int> g_render_threads{1};

template <typename F>
void parallel_for(int count, F&& body) {
  const int workers = std::clamp(g_render_threads.load(), 1, std::max(1, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

/// Everything the backward pass needs about one projected Gaussian.
struct Splat {
  int index = 0;  // position in the scene
  Eigen::Vector3d p_cam;
  Eigen::Matrix3d cov_cam;
  Eigen::Matrix<double, 2, 3> jacobian;
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;  // inverse of cov2d
  double opacity = 0.0;
  Eigen::Vector3d color;
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // inclusive pixel support box
};

// The fields the per-pixel loops touch, packed contiguously per tile.
struct TileSplat {
  double mx, my;
  double conic_a, conic_b, conic_c;
  double opacity;
  double r, g, b;
  double depth;
  int x0, x1, y0, y1;
};

struct SplatGrad {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Vector3d conic = Eigen::Vector3d::Zero();  // d/da, d/db, d/dc with d^2 = a dx^2 + 2 b dx dy + c dy^2
  double opacity = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();

  SplatGrad& operator+=(const SplatGrad& o) {
    mean2d += o.mean2d;
    conic += o.conic;
    opacity += o.opacity;
    color += o.color;
    return *this;
  }
};

struct Projection {
  Eigen::Vector3d p_cam;
  Eigen::Matrix3d cov_cam;
  Eigen::Matrix<double, 2, 3> jacobian;
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;
};

// Returns false when behind the near plane.
bool project(const Gaussian3D& g, const Camera& cam, Projection& out) {
  const auto& k = cam.intrinsics;
  out.p_cam = cam.pose * g.mean;
  const double z = out.p_cam.z();
  if (!(z >= kNearPlane)) return false;
  const double x = out.p_cam.x(), y = out.p_cam.y();
  const double inv_z = 1.0 / z;
  out.mean2d = {k.fx * x * inv_z + k.cx, k.fy * y * inv_z + k.cy};
  out.jacobian << k.fx * inv_z, 0.0, -k.fx * x * inv_z * inv_z,  //
      0.0, k.fy * inv_z, -k.fy * y * inv_z * inv_z;
  out.cov_cam = cam.pose.rotation * g.covariance() * cam.pose.rotation.transpose();
  out.cov2d = out.jacobian * out.cov_cam * out.jacobian.transpose() + kScreenBlur * Eigen::Matrix2d::Identity();
  return true;
}

double max_eigenvalue(const Eigen::Matrix2d& m) {
  const double mid = 0.5 * (m(0, 0) + m(1, 1));
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return mid + std::sqrt(std::max(0.0, mid * mid - det));
}

bool ellipse_misses_image(const Eigen::Vector2d& mean, double radius, int width, int height) {
  return mean.x() + radius < 0.0 || mean.x() - radius > width || mean.y() + radius < 0.0 ||
         mean.y() - radius > height;
}

}  // namespace

void set_render_threads(int threads) { g_render_threads = std::max(1, threads); }
int render_threads() { return g_render_threads.load(); }

std::optional<ProjectedGaussian> project_gaussian(const Gaussian3D& g, const Camera& cam) {
  Projection p;
  if (!project(g, cam, p)) return std::nullopt;
  const double radius = std::sqrt(kCullMahalanobisSq * max_eigenvalue(p.cov2d));
  if (ellipse_misses_image(p.mean2d, radius, cam.intrinsics.width, cam.intrinsics.height)) return std::nullopt;
  return ProjectedGaussian{p.mean2d, p.cov2d, p.p_cam.z()};
}

struct Rasterizer::State {
  std::vector<Splat> splats;                 // ascending depth, stable in scene order
  std::vector<std::vector<int>> tile_lists;  // indices into splats, front to back
  std::vector<std::vector<TileSplat>> tile_splats;
  // Forward hits per tile, front to back per pixel; pixel p of a tile owns
  // hits [hit_offsets[p], hit_offsets[p + 1]).
  struct Hit {
    int slot;
    double gauss;
  };
  std::vector<std::vector<Hit>> tile_hits;
  std::vector<std::vector<int>> hit_offsets;
  int tiles_x = 0, tiles_y = 0;
};

Rasterizer::Rasterizer(const GaussianScene& scene, const Camera& camera)
    : scene_(&scene), camera_(camera), state_(std::make_unique<State>()) {
  const int width = camera.intrinsics.width;
  const int height = camera.intrinsics.height;
  image_.width = width;
  image_.height = height;
  image_.rgb.resize(static_cast<Eigen::Index>(width) * height, 3);
  image_.alpha.resize(static_cast<Eigen::Index>(width) * height);
  image_.expected_depth.resize(static_cast<Eigen::Index>(width) * height);

  auto& st = *state_;
  st.splats.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Gaussian3D& g = scene.gaussians[i];
    Projection p;
    if (!project(g, camera, p)) continue;
    const double lambda = max_eigenvalue(p.cov2d);
    if (ellipse_misses_image(p.mean2d, std::sqrt(kCullMahalanobisSq * lambda), width, height)) continue;
    Splat s;
    s.index = static_cast<int>(i);
    s.p_cam = p.p_cam;
    s.cov_cam = p.cov_cam;
    s.jacobian = p.jacobian;
    s.mean2d = p.mean2d;
    s.cov2d = p.cov2d;
    const double det = p.cov2d(0, 0) * p.cov2d(1, 1) - p.cov2d(0, 1) * p.cov2d(1, 0);
    s.conic_a = p.cov2d(1, 1) / det;
    s.conic_b = -0.5 * (p.cov2d(0, 1) + p.cov2d(1, 0)) / det;
    s.conic_c = p.cov2d(0, 0) / det;
    s.opacity = g.opacity();
    s.color = g.color;
    const double support = std::sqrt(kSupportMahalanobisSq * lambda);
    // Pixel x has its center at x + 0.5.
    s.x0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - support - 0.5)));
    s.x1 = std::min(width - 1, static_cast<int>(std::floor(s.mean2d.x() + support - 0.5)));
    s.y0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - support - 0.5)));
    s.y1 = std::min(height - 1, static_cast<int>(std::floor(s.mean2d.y() + support - 0.5)));
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;
    st.splats.push_back(s);
  }
  std::stable_sort(st.splats.begin(), st.splats.end(),
                   [](const Splat& a, const Splat& b) { return a.p_cam.z() < b.p_cam.z(); });

  st.tiles_x = (width + kTileSize - 1) / kTileSize;
  st.tiles_y = (height + kTileSize - 1) / kTileSize;
  st.tile_lists.assign(static_cast<std::size_t>(st.tiles_x * st.tiles_y), {});
  for (int si = 0; si < static_cast<int>(st.splats.size()); ++si) {
    const Splat& s = st.splats[static_cast<std::size_t>(si)];
    for (int ty = s.y0 / kTileSize; ty <= s.y1 / kTileSize; ++ty)
      for (int tx = s.x0 / kTileSize; tx <= s.x1 / kTileSize; ++tx)
        st.tile_lists[static_cast<std::size_t>(ty * st.tiles_x + tx)].push_back(si);
  }
  st.tile_splats.resize(st.tile_lists.size());
  for (std::size_t tile = 0; tile < st.tile_lists.size(); ++tile) {
    auto& packed = st.tile_splats[tile];
    packed.reserve(st.tile_lists[tile].size());
    for (int si : st.tile_lists[tile]) {
      const Splat& s = st.splats[static_cast<std::size_t>(si)];
      packed.push_back({s.mean2d.x(), s.mean2d.y(), s.conic_a, s.conic_b, s.conic_c, s.opacity, s.color.x(),
                        s.color.y(), s.color.z(), s.p_cam.z(), s.x0, s.x1, s.y0, s.y1});
    }
  }

  const Eigen::Vector3d bg = scene.background;
  st.tile_hits.resize(st.tile_lists.size());
  st.hit_offsets.resize(st.tile_lists.size());
  parallel_for(st.tiles_x * st.tiles_y, [&](int tile) {
    const int tx = tile % st.tiles_x, ty = tile / st.tiles_x;
    const auto& list = st.tile_splats[static_cast<std::size_t>(tile)];
    auto& hits = st.tile_hits[static_cast<std::size_t>(tile)];
    auto& offsets = st.hit_offsets[static_cast<std::size_t>(tile)];
    offsets.assign(1, 0);
    const int tx0 = tx * kTileSize, ty0 = ty * kTileSize;
    std::size_t bound = 0;
    for (const TileSplat& s : list)
      bound += static_cast<std::size_t>(std::min(s.x1, tx0 + kTileSize - 1) - std::max(s.x0, tx0) + 1) *
               static_cast<std::size_t>(std::min(s.y1, ty0 + kTileSize - 1) - std::max(s.y0, ty0) + 1);
    hits.reserve(bound);
    for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double transmittance = 1.0, depth = 0.0;
        double cr = 0.0, cg = 0.0, cb = 0.0;
        for (int slot = 0; slot < static_cast<int>(list.size()); ++slot) {
          const TileSplat& s = list[static_cast<std::size_t>(slot)];
          if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
          const double dx = px - s.mx, dy = py - s.my;
          const double d2 = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
          if (d2 > kSupportMahalanobisSq) continue;
          const double gauss = std::exp(-0.5 * d2) - kKernelFloor;
          hits.push_back({slot, gauss});
          const double alpha = std::min(kMaxAlpha, s.opacity * gauss);
          const double w = alpha * transmittance;
          cr += w * s.r;
          cg += w * s.g;
          cb += w * s.b;
          depth += w * s.depth;
          transmittance *= 1.0 - alpha;
        }
        offsets.push_back(static_cast<int>(hits.size()));
        const Eigen::Index row = static_cast<Eigen::Index>(y) * width + x;
        image_.rgb(row, 0) = cr + transmittance * bg.x();
        image_.rgb(row, 1) = cg + transmittance * bg.y();
        image_.rgb(row, 2) = cb + transmittance * bg.z();
        image_.alpha(row) = 1.0 - transmittance;
        image_.expected_depth(row) = transmittance < 1.0 ? depth / (1.0 - transmittance) : 0.0;
      }
    }
  });
}

Rasterizer::~Rasterizer() = default;
Rasterizer::Rasterizer(Rasterizer&&) noexcept = default;
Rasterizer& Rasterizer::operator=(Rasterizer&&) noexcept = default;

RenderGradients Rasterizer::backward(const PixelArray& grad_rgb) const {
  const int width = image_.width, height = image_.height;
  if (grad_rgb.rows() != static_cast<Eigen::Index>(width) * height)
    throw std::invalid_argument("render_with_gradients: grad_image shape mismatch");
  if (!grad_rgb.allFinite()) throw std::invalid_argument("render_with_gradients: grad_image must be finite");

  const auto& st = *state_;
  const Eigen::Vector3d bg = scene_->background;

  // Per-tile partials aligned with the tile lists, reduced in tile order so
  // the result does not depend on the worker count.
  std::vector<std::vector<SplatGrad>> tile_grads(st.tile_lists.size());
  parallel_for(st.tiles_x * st.tiles_y, [&](int tile) {
    const int tx = tile % st.tiles_x, ty = tile / st.tiles_x;
    const auto& list = st.tile_splats[static_cast<std::size_t>(tile)];
    auto& grads = tile_grads[static_cast<std::size_t>(tile)];
    grads.assign(list.size(), SplatGrad{});
    const auto& tile_hits = st.tile_hits[static_cast<std::size_t>(tile)];
    const auto& offsets = st.hit_offsets[static_cast<std::size_t>(tile)];
    struct Hit {
      int slot;
      double alpha, gauss, transmittance;
      bool clamped;
    };
    std::vector<Hit> hits;
    int pixel = 0;
    for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x, ++pixel) {
        const Eigen::Index row = static_cast<Eigen::Index>(y) * width + x;
        const double gr = grad_rgb(row, 0), gg = grad_rgb(row, 1), gb = grad_rgb(row, 2);
        if (gr == 0.0 && gg == 0.0 && gb == 0.0) continue;
        const double px = x + 0.5, py = y + 0.5;
        hits.clear();
        double transmittance = 1.0;
        for (int h = offsets[static_cast<std::size_t>(pixel)]; h < offsets[static_cast<std::size_t>(pixel) + 1]; ++h) {
          const auto& fwd = tile_hits[static_cast<std::size_t>(h)];
          const double raw = list[static_cast<std::size_t>(fwd.slot)].opacity * fwd.gauss;
          const bool clamped = raw >= kMaxAlpha;
          const double alpha = clamped ? kMaxAlpha : raw;
          hits.push_back({fwd.slot, alpha, fwd.gauss, transmittance, clamped});
          transmittance *= 1.0 - alpha;
        }
        // Color composited behind the current splat, built back to front.
        double br = bg.x(), bgc = bg.y(), bb = bg.z();
        for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
          const TileSplat& s = list[static_cast<std::size_t>(it->slot)];
          SplatGrad& acc = grads[static_cast<std::size_t>(it->slot)];
          const double w = it->alpha * it->transmittance;
          acc.color.x() += w * gr;
          acc.color.y() += w * gg;
          acc.color.z() += w * gb;
          const double d_alpha = it->transmittance * (gr * (s.r - br) + gg * (s.g - bgc) + gb * (s.b - bb));
          br = it->alpha * s.r + (1.0 - it->alpha) * br;
          bgc = it->alpha * s.g + (1.0 - it->alpha) * bgc;
          bb = it->alpha * s.b + (1.0 - it->alpha) * bb;
          if (it->clamped) continue;
          acc.opacity += d_alpha * it->gauss;
          const double dx = px - s.mx, dy = py - s.my;
          // alpha = o (exp(-d^2/2) - floor), d = pixel - mean2d
          const double da = d_alpha * s.opacity * (it->gauss + kKernelFloor);
          acc.mean2d.x() += da * (s.conic_a * dx + s.conic_b * dy);
          acc.mean2d.y() += da * (s.conic_b * dx + s.conic_c * dy);
          acc.conic.x() -= 0.5 * da * dx * dx;
          acc.conic.y() -= da * dx * dy;
          acc.conic.z() -= 0.5 * da * dy * dy;
        }
      }
    }
  });

  std::vector<SplatGrad> splat_grads(st.splats.size());
  for (std::size_t tile = 0; tile < st.tile_lists.size(); ++tile) {
    const auto& list = st.tile_lists[tile];
    for (std::size_t slot = 0; slot < list.size(); ++slot)
      splat_grads[static_cast<std::size_t>(list[slot])] += tile_grads[tile][slot];
  }

  RenderGradients out;
  out.gaussians.assign(scene_->size(), GaussianGradient{});
  const auto& k = camera_.intrinsics;
  const Eigen::Matrix3d& view_rot = camera_.pose.rotation;
  Eigen::Vector3d pose_omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d pose_v = Eigen::Vector3d::Zero();

  for (std::size_t si = 0; si < st.splats.size(); ++si) {
    const Splat& s = st.splats[si];
    const SplatGrad& sg = splat_grads[si];
    const Gaussian3D& gaussian = scene_->gaussians[static_cast<std::size_t>(s.index)];
    GaussianGradient& gg = out.gaussians[static_cast<std::size_t>(s.index)];

    gg.color = sg.color;
    gg.opacity_logit = sg.opacity * s.opacity * (1.0 - s.opacity);

    // Conic Q = cov2d^-1 as a full 2x2 matrix; dL/dcov2d = -Q G_Q Q.
    Eigen::Matrix2d conic;
    conic << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
    Eigen::Matrix2d g_conic;
    g_conic << sg.conic(0), 0.5 * sg.conic(1), 0.5 * sg.conic(1), sg.conic(2);
    const Eigen::Matrix2d g_cov2d = -conic * g_conic * conic;

    // cov2d = J cov_cam J^T + blur
    const Eigen::Matrix3d g_cov_cam = s.jacobian.transpose() * g_cov2d * s.jacobian;
    const Eigen::Matrix<double, 2, 3> g_jac = 2.0 * g_cov2d * s.jacobian * s.cov_cam;

    const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
    const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
    Eigen::Vector3d g_pcam;
    g_pcam.x() = sg.mean2d.x() * k.fx * iz + g_jac(0, 2) * (-k.fx * iz2);
    g_pcam.y() = sg.mean2d.y() * k.fy * iz + g_jac(1, 2) * (-k.fy * iz2);
    g_pcam.z() = sg.mean2d.x() * (-k.fx * x * iz2) + sg.mean2d.y() * (-k.fy * y * iz2) +
                 g_jac(0, 0) * (-k.fx * iz2) + g_jac(0, 2) * (2.0 * k.fx * x * iz3) +
                 g_jac(1, 1) * (-k.fy * iz2) + g_jac(1, 2) * (2.0 * k.fy * y * iz3);

    gg.mean = view_rot.transpose() * g_pcam;

    // Sigma = M M^T with M = R_q S.
    const Eigen::Matrix3d g_sigma = view_rot.transpose() * g_cov_cam * view_rot;
    const Eigen::Matrix3d rq = gaussian.orientation.toRotationMatrix();
    const Eigen::Vector3d scale = gaussian.scale();
    const Eigen::Matrix3d m = rq * scale.asDiagonal();
    const Eigen::Matrix3d g_m = (g_sigma + g_sigma.transpose()) * m;
    for (int c = 0; c < 3; ++c) gg.log_scale(c) = g_m.col(c).dot(rq.col(c)) * scale(c);
    const Eigen::Matrix3d g_rq = g_m * scale.asDiagonal();
    for (int c = 0; c < 3; ++c) {
      const Eigen::Matrix3d d_rq = rq * skew(Eigen::Vector3d::Unit(c));
      gg.orientation(c) = (g_rq.array() * d_rq.array()).sum();
    }

    // Pose: p_cam -> p_cam + omega x p_cam + v, cov_cam -> cov_cam + [w]x cov_cam - cov_cam [w]x.
    pose_v += g_pcam;
    pose_omega += s.p_cam.cross(g_pcam);
    for (int c = 0; c < 3; ++c) {
      const Eigen::Matrix3d kx = skew(Eigen::Vector3d::Unit(c));
      pose_omega(c) += (g_cov_cam.array() * (kx * s.cov_cam - s.cov_cam * kx).array()).sum();
    }
  }
  out.pose.omega = pose_omega;
  out.pose.v = pose_v;
  return out;
}

RenderedImage render(const GaussianScene& scene, const Camera& camera) { return Rasterizer(scene, camera).image(); }

RenderGradients render_with_gradients(const GaussianScene& scene, const Camera& camera, const PixelArray& grad_image) {
  return Rasterizer(scene, camera).backward(grad_image);
}

}  // namespace ags
