#pragma once

// Rigid-body and pinhole camera math. Poses are world-to-camera, right-handed,
// with the camera looking down +z in its own frame.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "ags/errors.hpp"

namespace ags {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;

template <typename Derived>
Matrix3<typename Derived::Scalar> skew(const Eigen::MatrixBase<Derived>& w) {
  using S = typename Derived::Scalar;
  Matrix3<S> m;
  m << S(0), -w(2), w(1),  //
      w(2), S(0), -w(0),   //
      -w(1), w(0), S(0);
  return m;
}

/// Rodrigues formula; small angles fall back to the second-order series.
template <typename Derived>
Matrix3<typename Derived::Scalar> so3_exp(const Eigen::MatrixBase<Derived>& omega) {
  using S = typename Derived::Scalar;
  const S theta_sq = omega.squaredNorm();
  const Matrix3<S> k = skew(omega);
  S a, b;
  if (theta_sq < S(1e-16)) {
    a = S(1) - theta_sq / S(6);
    b = S(0.5) - theta_sq / S(24);
  } else {
    const S theta = std::sqrt(theta_sq);
    a = std::sin(theta) / theta;
    b = (S(1) - std::cos(theta)) / theta_sq;
  }
  return Matrix3<S>::Identity() + a * k + b * k * k;
}

/// Inverse of so3_exp. Uses the quaternion route, which stays accurate near
/// both zero and pi.
template <typename Derived>
Vector3<typename Derived::Scalar> so3_log(const Eigen::MatrixBase<Derived>& rotation) {
  using S = typename Derived::Scalar;
  Eigen::Quaternion<S> q{Matrix3<S>(rotation)};
  q.normalize();
  if (q.w() < S(0)) q.coeffs() = -q.coeffs();
  const Vector3<S> xyz = q.vec();
  const S sin_half = xyz.norm();
  if (sin_half < S(1e-12)) return S(2) * xyz;
  const S angle = S(2) * std::atan2(sin_half, q.w());
  return xyz * (angle / sin_half);
}

/// Nearest rotation in Frobenius norm, determinant forced to +1.
template <typename Derived>
Matrix3<typename Derived::Scalar> orthonormalize(const Eigen::MatrixBase<Derived>& m) {
  using S = typename Derived::Scalar;
  Eigen::JacobiSVD<Matrix3<S>> svd(Matrix3<S>(m), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3<S> d = Matrix3<S>::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < S(0) ? S(-1) : S(1);
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Geodesic distance between two rotations in radians.
template <typename DA, typename DB>
typename DA::Scalar geodesic_angle(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using S = typename DA::Scalar;
  const Matrix3<S> m = a.transpose() * b;
  const Vector3<S> axis(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  return std::atan2(S(0.5) * axis.norm(), S(0.5) * (m.trace() - S(1)));
}

template <typename Derived>
bool is_rotation(const Eigen::MatrixBase<Derived>& m, double tol = 1e-9) {
  using S = typename Derived::Scalar;
  const Matrix3<S> r = m;
  return (r.transpose() * r - Matrix3<S>::Identity()).cwiseAbs().maxCoeff() < tol &&
         std::abs(r.determinant() - S(1)) < tol;
}

/// Tangent vector of SE(3): rotation part omega (axis-angle, radians) and
/// translation part v (scene units).
template <typename Scalar>
struct Twist {
  Vector3<Scalar> omega = Vector3<Scalar>::Zero();
  Vector3<Scalar> v = Vector3<Scalar>::Zero();

  static Twist Zero() { return {}; }
  Eigen::Matrix<Scalar, 6, 1> vector() const {
    Eigen::Matrix<Scalar, 6, 1> out;
    out << omega, v;
    return out;
  }
  static Twist FromVector(const Eigen::Matrix<Scalar, 6, 1>& x) { return {x.template head<3>(), x.template tail<3>()}; }
  bool allFinite() const { return omega.allFinite() && v.allFinite(); }
};

/// Rigid transform x -> R x + t.
template <typename Scalar>
struct Rigid3 {
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  static Rigid3 Identity() { return {}; }

  static Rigid3 FromMatrix(const Matrix4<Scalar>& m) {
    return {m.template topLeftCorner<3, 3>(), m.template topRightCorner<3, 1>()};
  }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  Rigid3 inverse() const {
    const Matrix3<Scalar> rt = rotation.transpose();
    return {rt, -rt * translation};
  }

  Rigid3 operator*(const Rigid3& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& x) const { return rotation * x + translation; }

  /// Camera center in world coordinates when this is a world-to-camera pose.
  Vector3<Scalar> center() const { return -rotation.transpose() * translation; }

  bool allFinite() const { return rotation.allFinite() && translation.allFinite(); }
};

using Pose = Rigid3<double>;
using Twistd = Twist<double>;

template <typename Scalar>
Rigid3<Scalar> se3_exp(const Twist<Scalar>& xi) {
  const Scalar theta_sq = xi.omega.squaredNorm();
  const Matrix3<Scalar> k = skew(xi.omega);
  Scalar b, c;
  if (theta_sq < Scalar(1e-16)) {
    b = Scalar(0.5) - theta_sq / Scalar(24);
    c = Scalar(1) / Scalar(6) - theta_sq / Scalar(120);
  } else {
    const Scalar theta = std::sqrt(theta_sq);
    b = (Scalar(1) - std::cos(theta)) / theta_sq;
    c = (theta - std::sin(theta)) / (theta_sq * theta);
  }
  const Matrix3<Scalar> left_jacobian = Matrix3<Scalar>::Identity() + b * k + c * k * k;
  return {so3_exp(xi.omega), left_jacobian * xi.v};
}

template <typename Scalar>
Twist<Scalar> se3_log(const Rigid3<Scalar>& pose) {
  Twist<Scalar> xi;
  xi.omega = so3_log(pose.rotation);
  const Scalar theta_sq = xi.omega.squaredNorm();
  const Matrix3<Scalar> k = skew(xi.omega);
  Scalar d;
  if (theta_sq < Scalar(1e-16)) {
    d = Scalar(1) / Scalar(12) + theta_sq / Scalar(720);
  } else {
    // Half-angle form: 1 - cos(theta) loses all precision for small theta.
    const Scalar half = Scalar(0.5) * std::sqrt(theta_sq);
    d = (Scalar(1) - half * std::cos(half) / std::sin(half)) / theta_sq;
  }
  const Matrix3<Scalar> inv_left_jacobian = Matrix3<Scalar>::Identity() - Scalar(0.5) * k + d * k * k;
  xi.v = inv_left_jacobian * pose.translation;
  return xi;
}

/// pi_rel = tgt * src^-1, so that relative_pose(src, tgt) * src == tgt.
template <typename Scalar>
Rigid3<Scalar> relative_pose(const Rigid3<Scalar>& src, const Rigid3<Scalar>& tgt) {
  return tgt * src.inverse();
}

/// Left-multiplicative update exp(xi) * pose, re-orthonormalized.
template <typename Scalar>
Rigid3<Scalar> apply_twist(const Rigid3<Scalar>& pose, const Twist<Scalar>& xi) {
  if (!xi.allFinite()) throw std::invalid_argument("apply_twist: non-finite twist");
  Rigid3<Scalar> out = se3_exp(xi) * pose;
  out.rotation = orthonormalize(out.rotation);
  return out;
}

/// Update X -> R(omega) (X - pivot) + pivot + v on the camera side, with the
/// pivot in camera coordinates. Rotating about a point near the object instead
/// of the optical center keeps rotation and translation nearly decoupled.
template <typename Scalar>
Rigid3<Scalar> apply_pivot_twist(const Rigid3<Scalar>& pose, const Twist<Scalar>& step, const Vector3<Scalar>& pivot) {
  if (!step.allFinite()) throw std::invalid_argument("apply_pivot_twist: non-finite step");
  const Matrix3<Scalar> r = so3_exp(step.omega);
  Rigid3<Scalar> out = Rigid3<Scalar>{r, pivot - r * pivot + step.v} * pose;
  out.rotation = orthonormalize(out.rotation);
  return out;
}

/// Converts the gradient with respect to a left twist into the gradient with
/// respect to the parameters of apply_pivot_twist at zero.
template <typename Scalar>
Twist<Scalar> pivot_gradient(const Twist<Scalar>& grad, const Vector3<Scalar>& pivot) {
  return {grad.omega - pivot.cross(grad.v), grad.v};
}

/// Twist whose exponential maps the identity to `pose`.
template <typename Scalar>
Twist<Scalar> twist_log(const Rigid3<Scalar>& pose) {
  return se3_log(pose);
}

/// Rotation that turns world points about `pivot`; the returned transform is
/// applied on the world side of a world-to-camera pose (pose * transform).
template <typename Scalar>
Rigid3<Scalar> rotation_about(const Matrix3<Scalar>& rotation, const Vector3<Scalar>& pivot) {
  return {rotation, pivot - rotation * pivot};
}

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw std::invalid_argument("intrinsics: principal point outside the image");
  }

  /// Square pixels, principal point at the image center.
  static Intrinsics FromFieldOfView(int width, int height, double horizontal_fov_rad) {
    const double f = 0.5 * width / std::tan(0.5 * horizontal_fov_rad);
    return {f, f, 0.5 * width, 0.5 * height, width, height};
  }

  bool operator==(const Intrinsics&) const = default;
};

struct Camera {
  Pose pose;
  Intrinsics intrinsics;
};

using CameraList = std::vector<Camera>;

/// [flatten(pi_rel row-major), ln f_rel^x, ln f_rel^y]
using RelativeCameraEncoding = Eigen::Matrix<double, 18, 1>;

inline RelativeCameraEncoding encode_relative_camera(const Camera& src, const Camera& tgt) {
  RelativeCameraEncoding enc;
  const Matrix4<double> rel = relative_pose(src.pose, tgt.pose).matrix();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) enc(4 * r + c) = rel(r, c);
  enc(16) = std::log(tgt.intrinsics.fx / src.intrinsics.fx);
  enc(17) = std::log(tgt.intrinsics.fy / src.intrinsics.fy);
  return enc;
}

inline Pose decode_relative_pose(const RelativeCameraEncoding& enc) {
  Matrix4<double> m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = enc(4 * r + c);
  return Pose::FromMatrix(m);
}

/// World-to-camera pose at `eye` whose optical axis passes through `target`.
/// The image "up" direction follows world +z; when the viewing direction is
/// parallel to z, world +x is used instead.
inline Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  if (std::abs(forward.dot(up)) > 1.0 - 1e-9) up = Eigen::Vector3d::UnitX();
  // Camera axes in world coordinates: x right, y down, z forward.
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Pose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

/// Unit directions on a Fibonacci lattice; the first point is the +z pole.
inline std::vector<Eigen::Vector3d> fibonacci_directions(int n) {
  std::vector<Eigen::Vector3d> dirs;
  dirs.reserve(static_cast<std::size_t>(n));
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = n == 1 ? 1.0 : 1.0 - 2.0 * i / (n - 1.0);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

inline std::vector<Pose> sample_sphere_poses(int n, double radius, const Eigen::Vector3d& look_at_point) {
  if (n < 1) throw std::invalid_argument("sample_sphere_poses: n must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("sample_sphere_poses: radius must be positive");
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(n));
  for (const auto& d : fibonacci_directions(n)) poses.push_back(look_at(look_at_point + radius * d, look_at_point));
  return poses;
}

template <typename Scalar>
struct Similarity3 {
  Scalar scale = Scalar(1);
  Matrix3<Scalar> rotation = Matrix3<Scalar>::Identity();
  Vector3<Scalar> translation = Vector3<Scalar>::Zero();

  Vector3<Scalar> operator()(const Vector3<Scalar>& p) const { return scale * (rotation * p) + translation; }
};

using Similarity = Similarity3<double>;

/// Least-squares similarity mapping `source` onto `target` (Umeyama), with
/// reflections excluded.
inline Similarity umeyama_align(std::span<const Eigen::Vector3d> source, std::span<const Eigen::Vector3d> target) {
  if (source.size() != target.size()) throw std::invalid_argument("umeyama_align: point count mismatch");
  if (source.size() < 3) throw std::invalid_argument("umeyama_align: need at least 3 points");
  const Eigen::Index n = static_cast<Eigen::Index>(source.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = source[static_cast<std::size_t>(i)];
    dst.col(i) = target[static_cast<std::size_t>(i)];
  }
  for (const Eigen::Matrix3Xd* pts : {&src, &dst}) {
    const Eigen::Matrix3Xd centered = pts->colwise() - pts->rowwise().mean();
    Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
    const auto sv = svd.singularValues();
    if (sv(0) < 1e-12 || sv(1) < 1e-9 * sv(0))
      throw DegenerateConfigurationError("umeyama_align: point set has rank < 2");
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
  Similarity sim;
  const Eigen::Matrix3d sr = t.topLeftCorner<3, 3>();
  sim.scale = std::cbrt(sr.determinant());
  sim.rotation = orthonormalize(sr / sim.scale);
  sim.translation = t.topRightCorner<3, 1>();
  return sim;
}

}  // namespace ags
