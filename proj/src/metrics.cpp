#include "ags/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace ags {

std::vector<double> pairwise_rotation_errors_deg(std::span<const Camera> pred, std::span<const Camera> gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("rotation metrics: camera count mismatch");
  if (pred.size() < 2) throw std::invalid_argument("rotation metrics: need at least 2 cameras");
  std::vector<double> errors;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const Eigen::Matrix3d rel_pred = pred[i].pose.rotation * pred[j].pose.rotation.transpose();
      const Eigen::Matrix3d rel_gt = gt[i].pose.rotation * gt[j].pose.rotation.transpose();
      errors.push_back(geodesic_angle(rel_pred, rel_gt) * 180.0 / std::numbers::pi);
    }
  return errors;
}

double mean_pairwise_rotation_error_deg(std::span<const Camera> pred, std::span<const Camera> gt) {
  const auto errors = pairwise_rotation_errors_deg(pred, gt);
  double sum = 0.0;
  for (double e : errors) sum += e;
  return sum / static_cast<double>(errors.size());
}

double rotation_accuracy(std::span<const Camera> pred, std::span<const Camera> gt, double tau_deg) {
  const auto errors = pairwise_rotation_errors_deg(pred, gt);
  const auto hits = std::count_if(errors.begin(), errors.end(), [tau_deg](double e) { return e < tau_deg; });
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

double camera_center_accuracy(std::span<const Camera> pred, std::span<const Camera> gt, double tau) {
  if (pred.size() != gt.size()) throw std::invalid_argument("camera_center_accuracy: camera count mismatch");
  if (pred.size() < 3) throw std::invalid_argument("camera_center_accuracy: need at least 3 cameras");
  std::vector<Eigen::Vector3d> pc, gc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pc.push_back(pred[i].pose.center());
    gc.push_back(gt[i].pose.center());
  }
  const Similarity sim = umeyama_align(pc, gc);
  double scale = 0.0;
  for (std::size_t i = 0; i < gc.size(); ++i)
    for (std::size_t j = i + 1; j < gc.size(); ++j) scale = std::max(scale, (gc[i] - gc[j]).norm());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pc.size(); ++i)
    if ((sim(pc[i]) - gc[i]).norm() < tau * scale) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pc.size());
}

double psnr(const PixelArray& a, const PixelArray& b) {
  require_same_shape(a, b, "psnr");
  const double mse = (a - b).square().mean();
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

struct Plane {
  int width, height;
  PixelArray rgb;
};

Plane downsample(const Plane& p) {
  Plane out{p.width / 2, p.height / 2, {}};
  out.rgb.resize(static_cast<Eigen::Index>(out.width) * out.height, 3);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      auto at = [&](int xx, int yy) { return p.rgb.row(static_cast<Eigen::Index>(yy) * p.width + xx); };
      out.rgb.row(static_cast<Eigen::Index>(y) * out.width + x) =
          0.25 * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1));
    }
  return out;
}

double scale_distance(const Plane& a, const Plane& b) {
  const double mse = (a.rgb - b.rgb).square().mean();
  if (a.width < 2 || a.height < 2) return 0.5 * mse;
  double grad_diff = 0.0;
  for (int y = 0; y + 1 < a.height; ++y)
    for (int x = 0; x + 1 < a.width; ++x) {
      const Eigen::Index i = static_cast<Eigen::Index>(y) * a.width + x;
      const Eigen::Index ix = i + 1, iy = i + a.width;
      for (int c = 0; c < 3; ++c) {
        const double ga = std::hypot(a.rgb(ix, c) - a.rgb(i, c), a.rgb(iy, c) - a.rgb(i, c));
        const double gb = std::hypot(b.rgb(ix, c) - b.rgb(i, c), b.rgb(iy, c) - b.rgb(i, c));
        grad_diff += std::abs(ga - gb);
      }
    }
  grad_diff /= 3.0 * (a.width - 1) * (a.height - 1);
  return 0.5 * mse + 0.5 * grad_diff;
}

}  // namespace

double perceptual_proxy(const PixelArray& a, const PixelArray& b, int width, int height) {
  require_same_shape(a, b, "perceptual_proxy");
  if (a.rows() != static_cast<Eigen::Index>(width) * height) throw std::invalid_argument("perceptual_proxy: bad dimensions");
  Plane pa{width, height, a}, pb{width, height, b};
  double total = 0.0;
  for (int s = 0; s < 3; ++s) {
    total += scale_distance(pa, pb);
    if (s < 2) {
      pa = downsample(pa);
      pb = downsample(pb);
    }
  }
  return total / 3.0;
}

double perceptual_proxy(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("perceptual_proxy: shape mismatch");
  return perceptual_proxy(a.rgb, b.rgb, a.width, a.height);
}

double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                               const Eigen::Vector3d& c) {
  // Closest point by Voronoi region (Ericson, Real-Time Collision Detection 5.1.5).
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return ap.norm();
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return (p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))))).norm();
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

std::vector<Eigen::Vector3d> sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(t);
    cumulative.push_back(total);
  }
  std::vector<Eigen::Vector3d> out;
  if (mesh.triangles.empty() || total <= 0.0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double r = uni(rng) * total;
    const std::size_t t = std::min(cumulative.size() - 1,
                                   static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) -
                                                            cumulative.begin()));
    const auto& tri = mesh.triangles[t];
    const double s = std::sqrt(uni(rng)), u = uni(rng);
    const Eigen::Vector3d& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
    const Eigen::Vector3d& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
    const Eigen::Vector3d& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
    out.push_back((1.0 - s) * a + s * (1.0 - u) * b + s * u * c);
  }
  return out;
}

namespace {

/// Uniform hash grid over triangles; each triangle is registered in every
/// cell its tau-inflated bounding box touches, so a point's own cell holds
/// every triangle within tau of it.
class TriangleGrid {
 public:
  TriangleGrid(const TriangleMesh& mesh, double tau) : mesh_(mesh), tau_(tau) {
    Eigen::Vector3d lo = mesh.vertices.front(), hi = lo;
    for (const auto& v : mesh.vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    cell_ = std::max(tau, (hi - lo).maxCoeff() / 128.0);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      Eigen::Vector3d tlo = vertex(t, 0), thi = tlo;
      for (int k = 1; k < 3; ++k) {
        tlo = tlo.cwiseMin(vertex(t, k));
        thi = thi.cwiseMax(vertex(t, k));
      }
      const Eigen::Vector3i c0 = cell_of(tlo.array() - tau), c1 = cell_of(thi.array() + tau);
      for (int z = c0.z(); z <= c1.z(); ++z)
        for (int y = c0.y(); y <= c1.y(); ++y)
          for (int x = c0.x(); x <= c1.x(); ++x) cells_[key(x, y, z)].push_back(static_cast<int>(t));
    }
  }

  bool within_tau(const Eigen::Vector3d& p) const {
    const Eigen::Vector3i c = cell_of(p);
    const auto it = cells_.find(key(c.x(), c.y(), c.z()));
    if (it == cells_.end()) return false;
    for (int t : it->second) {
      const auto ti = static_cast<std::size_t>(t);
      if (point_triangle_distance(p, vertex(ti, 0), vertex(ti, 1), vertex(ti, 2)) <= tau_) return true;
    }
    return false;
  }

 private:
  const Eigen::Vector3d& vertex(std::size_t t, int k) const {
    return mesh_.vertices[static_cast<std::size_t>(mesh_.triangles[t][static_cast<std::size_t>(k)])];
  }
  Eigen::Vector3i cell_of(const Eigen::Vector3d& p) const {
    return (p / cell_).array().floor().cast<int>();
  }
  static std::uint64_t key(int x, int y, int z) {
    auto u = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v + (1 << 20))) & 0x1FFFFF; };
    return (u(x) << 42) | (u(y) << 21) | u(z);
  }

  const TriangleMesh& mesh_;
  double tau_;
  double cell_ = 1.0;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

double coverage(const std::vector<Eigen::Vector3d>& samples, const TriangleGrid& grid) {
  std::size_t hits = 0;
  for (const auto& p : samples)
    if (grid.within_tau(p)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

}  // namespace

double mesh_f1(const TriangleMesh& pred, const TriangleMesh& gt, double tau, int n_samples, std::uint64_t seed) {
  if (pred.empty() || gt.empty()) {
    std::cerr << "warning: mesh_f1 called with an empty mesh; score is 0\n";
    return 0.0;
  }
  const auto pred_samples = sample_surface(pred, n_samples, seed);
  const auto gt_samples = sample_surface(gt, n_samples, seed + 1);
  if (pred_samples.empty() || gt_samples.empty()) return 0.0;
  const double precision = coverage(pred_samples, TriangleGrid(gt, tau));
  const double recall = coverage(gt_samples, TriangleGrid(pred, tau));
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace ags
