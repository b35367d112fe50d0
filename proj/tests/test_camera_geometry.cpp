#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "ags/camera_geometry.hpp"
#include "oracles.hpp"

namespace ags {
namespace {

using testing::random_pose;
using testing::random_rotation;

// exp of a 4x4 twist matrix by its Taylor series.
Eigen::Matrix4d series_exp(const Twistd& xi) {
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a.topLeftCorner<3, 3>() = skew(xi.omega);
  a.topRightCorner<3, 1>() = xi.v;
  Eigen::Matrix4d term = Eigen::Matrix4d::Identity(), sum = Eigen::Matrix4d::Identity();
  for (int k = 1; k < 60; ++k) {
    term = term * a / k;
    sum += term;
  }
  return sum;
}

Twistd random_twist(std::mt19937_64& rng, double max_angle) {
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(0.0, max_angle);
  Eigen::Vector3d axis(n(rng), n(rng), n(rng));
  return {axis.normalized() * u(rng), Eigen::Vector3d(n(rng), n(rng), n(rng))};
}

TEST(RelativePose, SelfIsIdentity) {
  std::mt19937_64 rng(1);
  const Pose p = random_pose(rng);
  const Pose r = relative_pose(p, p);
  EXPECT_LT((r.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RelativePose, PureTranslation) {
  Pose tgt;
  tgt.translation = {0, 0, 2};
  const Pose r = relative_pose(Pose::Identity(), tgt);
  EXPECT_EQ(r.rotation, Eigen::Matrix3d::Identity());
  EXPECT_EQ(r.translation, Eigen::Vector3d(0, 0, 2));
}

TEST(RelativePose, MatchesMatrixProduct) {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Pose r = relative_pose(a, b);
    worst = std::max(worst, (r.matrix() - b.matrix() * a.matrix().inverse()).cwiseAbs().maxCoeff());
    worst = std::max(worst, ((r * a).matrix() - b.matrix()).cwiseAbs().maxCoeff());
    EXPECT_TRUE(is_rotation(r.rotation));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(ApplyTwist, ZeroLeavesPoseUnchanged) {
  std::mt19937_64 rng(3);
  const Pose p = random_pose(rng);
  EXPECT_LT((apply_twist(p, Twistd::Zero()).matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ApplyTwist, QuarterTurnAboutZ) {
  const Twistd xi{{0, 0, std::numbers::pi / 2}, Eigen::Vector3d::Zero()};
  const Pose r = apply_twist(Pose::Identity(), xi);
  Eigen::Matrix3d expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((r.rotation - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.matrix() - series_exp(xi)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ApplyTwist, MatchesSeriesExponential) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Twistd xi = random_twist(rng, 3.0);
    EXPECT_LT((se3_exp(xi).matrix() - series_exp(xi)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ApplyTwist, LogRoundTrip) {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Twistd xi = random_twist(rng, 3.0);
    const Pose p = apply_twist(Pose::Identity(), xi);
    EXPECT_TRUE(is_rotation(p.rotation));
    worst = std::max(worst, (twist_log(p).vector() - xi.vector()).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(ApplyTwist, SmallAngleRoundTrip) {
  const Twistd xi{{1e-9, -2e-9, 5e-10}, {0.1, 0.2, -0.3}};
  EXPECT_LT((twist_log(apply_twist(Pose::Identity(), xi)).vector() - xi.vector()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ApplyTwist, RejectsNonFinite) {
  Twistd xi;
  xi.omega.x() = std::nan("");
  EXPECT_THROW(apply_twist(Pose::Identity(), xi), std::invalid_argument);
}

TEST(PivotTwist, ZeroStepIsIdentity) {
  std::mt19937_64 rng(6);
  const Pose p = random_pose(rng);
  const Pose q = apply_pivot_twist(p, Twistd::Zero(), Eigen::Vector3d(0.3, -0.2, 2.0));
  EXPECT_LT((q.matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PivotTwist, PivotPointIsFixedByRotation) {
  std::mt19937_64 rng(7);
  const Pose p = random_pose(rng);
  const Eigen::Vector3d world(0.2, 0.1, -0.4);
  const Eigen::Vector3d pivot = p * world;
  const Pose q = apply_pivot_twist(p, Twistd{{0.3, -0.1, 0.2}, Eigen::Vector3d::Zero()}, pivot);
  EXPECT_LT((q * world - pivot).norm(), 1e-12);
}

TEST(PivotTwist, GradientConversionMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const Pose p = random_pose(rng);
  std::vector<Eigen::Vector3d> pts;
  std::vector<Eigen::Vector3d> w;
  std::normal_distribution<double> n;
  for (int i = 0; i < 5; ++i) {
    pts.emplace_back(n(rng), n(rng), n(rng));
    w.emplace_back(n(rng), n(rng), n(rng));
  }
  const auto f = [&](const Pose& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) s += w[i].dot(q * pts[i]) + 0.1 * (q * pts[i]).squaredNorm();
    return s;
  };
  const Eigen::Vector3d pivot(0.4, -0.3, 2.5);
  const double h = 1e-6;
  Eigen::Matrix<double, 6, 1> left, direct;
  for (int k = 0; k < 6; ++k) {
    Eigen::Matrix<double, 6, 1> e = Eigen::Matrix<double, 6, 1>::Zero();
    e(k) = h;
    left(k) = (f(se3_exp(Twistd::FromVector(e)) * p) - f(se3_exp(Twistd::FromVector(-e)) * p)) / (2 * h);
    direct(k) = (f(apply_pivot_twist(p, Twistd::FromVector(e), pivot)) -
                 f(apply_pivot_twist(p, Twistd::FromVector(-e), pivot))) /
                (2 * h);
  }
  const Twistd converted = pivot_gradient(Twistd::FromVector(left), pivot);
  EXPECT_LT((converted.vector() - direct).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + direct.cwiseAbs().maxCoeff()));
}

TEST(RelativeCameraEncoding, IdenticalCamerasExactly) {
  std::mt19937_64 rng(9);
  const Camera c{random_pose(rng), Intrinsics::FromFieldOfView(64, 64, 0.8)};
  const RelativeCameraEncoding enc = encode_relative_camera(c, c);
  RelativeCameraEncoding expected = RelativeCameraEncoding::Zero();
  expected(0) = expected(5) = expected(10) = expected(15) = 1.0;
  // Exact up to the rounding of R R^T.
  EXPECT_LT((enc - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(enc(16), 0.0);
  EXPECT_EQ(enc(17), 0.0);
  EXPECT_EQ(enc.segment<4>(12), Eigen::Vector4d(0, 0, 0, 1));
}

TEST(RelativeCameraEncoding, FocalRatio) {
  Camera src{Pose::Identity(), Intrinsics::FromFieldOfView(64, 64, 0.8)};
  Camera tgt = src;
  tgt.intrinsics.fx *= 2.0;
  tgt.intrinsics.fy *= 2.0;
  const RelativeCameraEncoding enc = encode_relative_camera(src, tgt);
  EXPECT_NEAR(enc(16), 0.693147, 1e-6);
  EXPECT_NEAR(enc(17), 0.693147, 1e-6);
}

TEST(RelativeCameraEncoding, GenericPairMatchesMatrixProduct) {
  std::mt19937_64 rng(10);
  const Intrinsics k = Intrinsics::FromFieldOfView(64, 64, 0.8);
  const Camera a{random_pose(rng), k}, b{random_pose(rng), k};
  const RelativeCameraEncoding enc = encode_relative_camera(a, b);
  const Eigen::Matrix4d m = b.pose.matrix() * a.pose.matrix().inverse();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(enc(4 * r + c), m(r, c), 1e-12);
  EXPECT_EQ(enc.segment<4>(12), Eigen::Vector4d(0, 0, 0, 1));
  EXPECT_LT((decode_relative_pose(enc).matrix() - m).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LookAt, OpticalAxisThroughTarget) {
  const Eigen::Vector3d eye(1.0, 2.0, 0.5), target(-0.2, 0.1, 0.3);
  const Pose p = look_at(eye, target);
  EXPECT_TRUE(is_rotation(p.rotation));
  EXPECT_LT((p.center() - eye).norm(), 1e-12);
  const Eigen::Vector3d t = p * target;
  EXPECT_NEAR(t.x(), 0.0, 1e-12);
  EXPECT_NEAR(t.y(), 0.0, 1e-12);
  EXPECT_GT(t.z(), 0.0);
}

TEST(LookAt, PoleFallsBackToXUp) {
  const Pose p = look_at(Eigen::Vector3d(0, 0, 3), Eigen::Vector3d::Zero());
  EXPECT_TRUE(p.allFinite());
  EXPECT_TRUE(is_rotation(p.rotation));
  EXPECT_NEAR((p * Eigen::Vector3d::Zero()).z(), 3.0, 1e-12);
}

TEST(SphereSampling, SingleCameraAtTopPole) {
  const Eigen::Vector3d center(0.5, -0.5, 1.0);
  const auto poses = sample_sphere_poses(1, 2.0, center);
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_LT((poses[0].center() - (center + Eigen::Vector3d(0, 0, 2.0))).norm(), 1e-12);
}

TEST(SphereSampling, CentersOnSphereLookingInward) {
  const Eigen::Vector3d center(0.1, 0.2, -0.3);
  for (const Pose& p : sample_sphere_poses(100, 2.5, center)) {
    EXPECT_NEAR((p.center() - center).norm(), 2.5, 1e-9);
    EXPECT_TRUE(is_rotation(p.rotation));
    const Eigen::Vector3d c = p * center;
    EXPECT_NEAR(c.head<2>().norm(), 0.0, 1e-9);
  }
}

TEST(SphereSampling, NearestNeighborSpacingIsUniform) {
  const int n = 256;
  const auto poses = sample_sphere_poses(n, 1.0, Eigen::Vector3d::Zero());
  const double expected = std::sqrt(4.0 * std::numbers::pi / n);
  for (int i = 0; i < n; ++i) {
    double nearest = std::numbers::pi;
    for (int j = 0; j < n; ++j)
      if (j != i)
        nearest = std::min(nearest, std::acos(std::clamp(poses[i].center().dot(poses[j].center()), -1.0, 1.0)));
    EXPECT_GT(nearest, 0.5 * expected) << i;
    EXPECT_LT(nearest, 2.0 * expected) << i;
  }
}

TEST(SphereSampling, RejectsBadArguments) {
  EXPECT_THROW(sample_sphere_poses(0, 1.0, Eigen::Vector3d::Zero()), std::invalid_argument);
  EXPECT_THROW(sample_sphere_poses(4, 0.0, Eigen::Vector3d::Zero()), std::invalid_argument);
}

std::vector<Eigen::Vector3d> random_points(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d;
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(d(rng), d(rng), d(rng));
  return pts;
}

double residual(const Similarity& s, const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b) {
  double r = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r += (s(a[i]) - b[i]).squaredNorm();
  return r;
}

TEST(Umeyama, AlreadyAligned) {
  std::mt19937_64 rng(11);
  const auto pts = random_points(rng, 8);
  const Similarity s = umeyama_align(pts, pts);
  EXPECT_NEAR(s.scale, 1.0, 1e-12);
  EXPECT_LT((s.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(s.translation.norm(), 1e-12);
}

TEST(Umeyama, RecoversConstructedSimilarity) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gt = random_points(rng, 10);
    const Eigen::Matrix3d r = random_rotation(rng);
    const Eigen::Vector3d t = random_points(rng, 1)[0];
    std::vector<Eigen::Vector3d> pred;
    for (const auto& g : gt) pred.push_back(r.transpose() * (g - t) / 2.0);
    const Similarity s = umeyama_align(pred, gt);
    EXPECT_NEAR(s.scale, 2.0, 1e-9);
    EXPECT_LT((s.rotation - r).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((s.translation - t).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Umeyama, MirroredSetKeepsProperRotation) {
  std::mt19937_64 rng(13);
  const auto gt = random_points(rng, 10);
  std::vector<Eigen::Vector3d> mirrored;
  for (const auto& g : gt) mirrored.emplace_back(-g.x(), g.y(), g.z());
  const Similarity s = umeyama_align(mirrored, gt);
  EXPECT_NEAR(s.rotation.determinant(), 1.0, 1e-9);
  EXPECT_TRUE(is_rotation(s.rotation));
  EXPECT_GT(residual(s, mirrored, gt), 1e-3);
}

TEST(Umeyama, BeatsRandomSimilarities) {
  std::mt19937_64 rng(14);
  const auto a = random_points(rng, 12);
  auto b = random_points(rng, 12);
  const Similarity best = umeyama_align(a, b);
  const double r0 = residual(best, a, b);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (int i = 0; i < 100; ++i) {
    Similarity s;
    s.scale = u(rng);
    s.rotation = random_rotation(rng);
    s.translation = random_points(rng, 1)[0];
    EXPECT_LE(r0, residual(s, a, b) + 1e-12);
  }
}

TEST(Umeyama, DegenerateConfigurations) {
  std::vector<Eigen::Vector3d> collinear = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  EXPECT_THROW(umeyama_align(collinear, collinear), DegenerateConfigurationError);
  std::vector<Eigen::Vector3d> two = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(umeyama_align(two, two), std::invalid_argument);
}

TEST(Rotations, OrthonormalizeProjectsOntoSO3) {
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int i = 0; i < 50; ++i) {
    Eigen::Matrix3d m = random_rotation(rng);
    for (int k = 0; k < 9; ++k) m.data()[k] += n(rng);
    EXPECT_TRUE(is_rotation(orthonormalize(m)));
  }
}

TEST(Rotations, GeodesicAngle) {
  const Eigen::Matrix3d r = so3_exp(Eigen::Vector3d(0, 0.7, 0));
  EXPECT_NEAR(geodesic_angle(Eigen::Matrix3d::Identity(), r), 0.7, 1e-12);
  EXPECT_EQ(geodesic_angle(r, r), 0.0);
}

TEST(Rotations, LogNearPi) {
  const Eigen::Vector3d w = Eigen::Vector3d(1, 2, -1).normalized() * (std::numbers::pi - 1e-7);
  EXPECT_LT((so3_log(so3_exp(w)) - w).norm(), 1e-6);
}

}  // namespace
}  // namespace ags
