#include "ags/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "marching_cubes_tables.hpp"

namespace ags {
namespace {

// Kernel values beyond this squared Mahalanobis radius are below 3.1e-7 and
// are not splatted into the grid.
constexpr double kDensityCutoffSq = 30.0;

// Corner offsets and edge endpoints in the table's vertex numbering.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  const Eigen::Vector3d& a = vertices[static_cast<std::size_t>(tri[0])];
  const Eigen::Vector3d& b = vertices[static_cast<std::size_t>(tri[1])];
  const Eigen::Vector3d& c = vertices[static_cast<std::size_t>(tri[2])];
  return 0.5 * (b - a).cross(c - a).norm();
}

double TriangleMesh::surface_area() const {
  double area = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) area += triangle_area(t);
  return area;
}

double density(const GaussianScene& scene, const Eigen::Vector3d& x) {
  double d = 0.0;
  for (const auto& g : scene.gaussians) {
    const Eigen::Vector3d r = x - g.mean;
    const double m2 = r.dot(g.covariance().ldlt().solve(r));
    d += g.opacity() * std::exp(-0.5 * m2);
  }
  return d;
}

TriangleMesh extract_mesh(const GaussianScene& scene, int grid_resolution, double iso_level) {
  if (grid_resolution < 8) throw std::invalid_argument("extract_mesh: grid_resolution must be >= 8");
  TriangleMesh mesh;
  if (scene.empty()) return mesh;

  Eigen::Vector3d lo = scene.gaussians.front().mean, hi = lo;
  double max_scale = 0.0;
  for (const auto& g : scene.gaussians) {
    lo = lo.cwiseMin(g.mean);
    hi = hi.cwiseMax(g.mean);
    max_scale = std::max(max_scale, g.scale().maxCoeff());
  }
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo).maxCoeff() + 3.0 * max_scale;
  const Eigen::Vector3d origin = center - Eigen::Vector3d::Constant(half);
  const int n = grid_resolution;
  const int np = n + 1;
  const double h = 2.0 * half / n;
  auto point_index = [np](int i, int j, int k) {
    return (static_cast<std::size_t>(k) * np + static_cast<std::size_t>(j)) * np + static_cast<std::size_t>(i);
  };
  auto grid_point = [&](int i, int j, int k) { return Eigen::Vector3d(origin + h * Eigen::Vector3d(i, j, k)); };

  std::vector<double> field(static_cast<std::size_t>(np) * np * np, 0.0);
  for (const auto& g : scene.gaussians) {
    const Eigen::Matrix3d inv_cov = g.covariance().inverse();
    const double opacity = g.opacity();
    const double reach = std::sqrt(kDensityCutoffSq) * g.scale().maxCoeff();
    Eigen::Vector3i b0, b1;
    for (int a = 0; a < 3; ++a) {
      b0(a) = std::max(0, static_cast<int>(std::ceil((g.mean(a) - reach - origin(a)) / h)));
      b1(a) = std::min(n, static_cast<int>(std::floor((g.mean(a) + reach - origin(a)) / h)));
    }
    for (int k = b0.z(); k <= b1.z(); ++k)
      for (int j = b0.y(); j <= b1.y(); ++j)
        for (int i = b0.x(); i <= b1.x(); ++i) {
          const Eigen::Vector3d r = grid_point(i, j, k) - g.mean;
          const double m2 = r.dot(inv_cov * r);
          if (m2 <= kDensityCutoffSq) field[point_index(i, j, k)] += opacity * std::exp(-0.5 * m2);
        }
  }

  // Vertices are shared between cells through the key (lower grid point, axis).
  std::unordered_map<std::size_t, int> edge_vertex;
  auto vertex_on_edge = [&](const Eigen::Vector3i& pa, const Eigen::Vector3i& pb) {
    const Eigen::Vector3i lo_pt = pa.cwiseMin(pb);
    const int axis = pa.x() != pb.x() ? 0 : (pa.y() != pb.y() ? 1 : 2);
    const std::size_t key = point_index(lo_pt.x(), lo_pt.y(), lo_pt.z()) * 3 + static_cast<std::size_t>(axis);
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double va = field[point_index(pa.x(), pa.y(), pa.z())];
    const double vb = field[point_index(pb.x(), pb.y(), pb.z())];
    const double denom = vb - va;
    const double u = std::abs(denom) < 1e-300 ? 0.5 : std::clamp((iso_level - va) / denom, 0.0, 1.0);
    const Eigen::Vector3d xa = grid_point(pa.x(), pa.y(), pa.z());
    const Eigen::Vector3d xb = grid_point(pb.x(), pb.y(), pb.z());
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(xa + u * (xb - xa));
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        int cube_index = 0;
        for (int c = 0; c < 8; ++c)
          if (field[point_index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])] < iso_level)
            cube_index |= 1 << c;
        if (detail::kEdgeTable[cube_index] == 0) continue;
        std::array<int, 12> edge_ids{};
        for (int e = 0; e < 12; ++e) {
          if (!(detail::kEdgeTable[cube_index] & (1 << e))) continue;
          const int* ca = kCorner[kEdge[e][0]];
          const int* cb = kCorner[kEdge[e][1]];
          edge_ids[static_cast<std::size_t>(e)] = vertex_on_edge({i + ca[0], j + ca[1], k + ca[2]},
                                                                 {i + cb[0], j + cb[1], k + cb[2]});
        }
        for (int t = 0; detail::kTriTable[cube_index][t] != -1; t += 3) {
          const std::array<int, 3> tri{edge_ids[static_cast<std::size_t>(detail::kTriTable[cube_index][t])],
                                       edge_ids[static_cast<std::size_t>(detail::kTriTable[cube_index][t + 1])],
                                       edge_ids[static_cast<std::size_t>(detail::kTriTable[cube_index][t + 2])]};
          const Eigen::Vector3d& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
          const Eigen::Vector3d& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
          const Eigen::Vector3d& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
          if (0.5 * (b - a).cross(c - a).norm() <= 1e-12) continue;
          mesh.triangles.push_back(tri);
        }
      }
  return mesh;
}

}  // namespace ags
