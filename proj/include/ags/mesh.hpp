#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

#include "ags/gaussian.hpp"

namespace ags {

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  double triangle_area(std::size_t t) const;
  double surface_area() const;
};

inline constexpr double kDefaultIsoLevel = 0.2;

/// D(x) = sum_i opacity_i exp(-1/2 (x - mu_i)^T Sigma_i^-1 (x - mu_i))
double density(const GaussianScene& scene, const Eigen::Vector3d& x);

/// Marching cubes over the density field on a cube that bounds all means,
/// padded by three times the largest scale. `grid_resolution` is the number
/// of cells along each axis.
TriangleMesh extract_mesh(const GaussianScene& scene, int grid_resolution, double iso_level = kDefaultIsoLevel);

}  // namespace ags
