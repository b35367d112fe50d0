#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "ags/camera_geometry.hpp"
#include "ags/image.hpp"
#include "ags/mesh.hpp"

namespace ags {

/// Geodesic errors (degrees) of the relative rotations R_i R_j^T over all
/// unordered pairs i < j, in lexicographic pair order.
std::vector<double> pairwise_rotation_errors_deg(std::span<const Camera> pred, std::span<const Camera> gt);
double mean_pairwise_rotation_error_deg(std::span<const Camera> pred, std::span<const Camera> gt);

/// Fraction of camera pairs whose relative rotation error is below tau_deg.
double rotation_accuracy(std::span<const Camera> pred, std::span<const Camera> gt, double tau_deg);

/// Fraction of cameras whose center lies within tau * scene scale of the
/// truth after similarity alignment. Scene scale is the largest pairwise
/// distance between ground-truth centers.
double camera_center_accuracy(std::span<const Camera> pred, std::span<const Camera> gt, double tau = 0.1);

inline constexpr double kPsnrCap = 99.0;

double psnr(const PixelArray& a, const PixelArray& b);

/// Multi-scale structural distance used where a learned perceptual metric
/// would be: the mean over three dyadic scales of
/// 0.5 MSE + 0.5 mean|grad a - grad b| (forward-difference gradient magnitude).
double perceptual_proxy(const Image& a, const Image& b);
double perceptual_proxy(const PixelArray& a, const PixelArray& b, int width, int height);

/// Surface F1 at distance tau from area-weighted samples of both meshes.
double mesh_f1(const TriangleMesh& pred, const TriangleMesh& gt, double tau = 0.01, int n_samples = 100000,
               std::uint64_t seed = 0);

/// Points drawn uniformly (by area) on the mesh surface.
std::vector<Eigen::Vector3d> sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed);

/// Exact distance from a point to a triangle.
double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                               const Eigen::Vector3d& c);

struct MetricsSummary {
  std::map<double, double> rot_acc;  // threshold (deg) -> fraction
  double cc_acc = 0.0;
  double psnr = 0.0;
  double proxy = 0.0;
  std::map<double, double> f1;  // threshold -> score
};

}  // namespace ags
