#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ags/errors.hpp"
#include "ags/io.hpp"
#include "ags/metrics.hpp"
#include "ags/synthetic.hpp"
#include "oracles.hpp"

namespace ags {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ags_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CaptureOptions options(int n_views, double noise, int n_outliers) {
  CaptureOptions o;
  o.n_views = n_views;
  o.width = o.height = 32;
  o.rot_noise_deg = noise;
  o.n_outliers = n_outliers;
  o.seed = 77;
  return o;
}

TEST(GenerateScene, DeterministicPerSeed) {
  for (SceneStyle style : {SceneStyle::kBlob, SceneStyle::kCluster, SceneStyle::kRing}) {
    const GaussianScene a = generate_scene(5, 300, style), b = generate_scene(5, 300, style), c = generate_scene(6, 300, style);
    ASSERT_EQ(a.size(), 300u);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.gaussians[i].mean, b.gaussians[i].mean);
      EXPECT_EQ(a.gaussians[i].color, b.gaussians[i].color);
      differs |= a.gaussians[i].mean != c.gaussians[i].mean;
    }
    EXPECT_TRUE(differs);
  }
}

TEST(GenerateScene, InsideUnitSphereWithColorVariety) {
  for (SceneStyle style : {SceneStyle::kBlob, SceneStyle::kCluster, SceneStyle::kRing}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const GaussianScene s = generate_scene(seed, 400, style);
      Eigen::MatrixXd colors(s.size(), 3);
      for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_LE(s.gaussians[i].mean.norm(), 1.0);
        EXPECT_NEAR(s.gaussians[i].orientation.norm(), 1.0, 1e-12);
        colors.row(static_cast<Eigen::Index>(i)) = s.gaussians[i].color.transpose();
      }
      const Eigen::RowVector3d mean = colors.colwise().mean();
      const double var = (colors.rowwise() - mean).squaredNorm() / static_cast<double>(s.size());
      EXPECT_GT(var, 0.01);
    }
  }
}

TEST(SceneStyle, NamesRoundTrip) {
  for (SceneStyle style : {SceneStyle::kBlob, SceneStyle::kCluster, SceneStyle::kRing})
    EXPECT_EQ(parse_scene_style(to_string(style)), style);
  EXPECT_THROW(parse_scene_style("torus"), ValidationError);
}

TEST(GenerateCapture, ViewsThirtyDegreesApartDiffer) {
  const GaussianScene scene = generate_scene(1, 512, SceneStyle::kCluster);
  const Intrinsics k = Intrinsics::FromFieldOfView(48, 48, 50.0 * std::numbers::pi / 180.0);
  for (int i = 0; i < 5; ++i) {
    const double a = 0.4 * i, b = a + 30.0 * std::numbers::pi / 180.0;
    const Camera ca{look_at(Eigen::Vector3d(2.5 * std::cos(a), 2.5 * std::sin(a), 0.5), Eigen::Vector3d::Zero()), k};
    const Camera cb{look_at(Eigen::Vector3d(2.5 * std::cos(b), 2.5 * std::sin(b), 0.5), Eigen::Vector3d::Zero()), k};
    EXPECT_GT(perceptual_proxy(render(scene, ca).to_image(), render(scene, cb).to_image()), 0.01);
  }
}

TEST(GenerateCapture, NoiseFreeInitialPosesMatchGroundTruth) {
  const Capture cap = generate_capture(generate_scene(2, 256, SceneStyle::kBlob), options(6, 0.0, 0));
  ASSERT_EQ(cap.images.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(cap.init_cameras[i].pose.matrix(), cap.gt_cameras[i].pose.matrix());
    EXPECT_FALSE(cap.views[i].outlier);
    EXPECT_EQ(cap.views[i].rotation_error_deg, 0.0);
  }
}

TEST(GenerateCapture, RecordedPerturbationsAreExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CaptureOptions o = options(8, 5.0, 1);
    o.seed = seed;
    o.trans_noise = 0.05;
    const Capture cap = generate_capture(generate_scene(seed, 128, SceneStyle::kCluster), o);
    int outliers = 0;
    for (std::size_t i = 0; i < cap.views.size(); ++i) {
      const double angle =
          geodesic_angle(cap.init_cameras[i].pose.rotation, cap.gt_cameras[i].pose.rotation) * 180.0 / std::numbers::pi;
      EXPECT_NEAR(angle, cap.views[i].rotation_error_deg, 1e-9);
      if (cap.views[i].outlier) {
        ++outliers;
        EXPECT_GE(angle, o.outlier_min_deg - 1e-9);
        EXPECT_LE(angle, o.outlier_max_deg + 1e-9);
      }
      EXPECT_EQ(cap.gt_cameras[i].intrinsics.width, 32);
    }
    EXPECT_EQ(outliers, 1);
  }
}

TEST(GenerateCapture, ImagesAreQuantized) {
  const Capture cap = generate_capture(generate_scene(3, 128, SceneStyle::kRing), options(3, 0.0, 0));
  for (const Image& im : cap.images.images) {
    const PixelArray scaled = im.rgb * 255.0;
    EXPECT_LT((scaled - scaled.round()).abs().maxCoeff(), 1e-9);
  }
}

TEST(GenerateCapture, GroundTruthPoseFitsBestLocally) {
  const GaussianScene scene = generate_scene(4, 512, SceneStyle::kCluster);
  const Capture cap = generate_capture(scene, options(4, 0.0, 0));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t v = static_cast<std::size_t>(trial % 4);
    const Camera& gt = cap.gt_cameras[v];
    const double at_gt = (render(scene, gt).rgb - cap.images[v].rgb).square().mean();
    const Eigen::Vector3d axis = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    Camera off = gt;
    const Eigen::Vector3d pivot = Eigen::Vector3d::Zero();
    off.pose = apply_pivot_twist(gt.pose, Twistd{axis * 10.0 * std::numbers::pi / 180.0, Eigen::Vector3d::Zero()}, pivot);
    const double at_off = (render(scene, off).rgb - cap.images[v].rgb).square().mean();
    EXPECT_LT(at_gt, at_off) << trial;
  }
}

TEST(GenerateCapture, RejectsBadOptions) {
  const GaussianScene scene = generate_scene(1, 16, SceneStyle::kBlob);
  CaptureOptions o = options(4, 0.0, 4);
  EXPECT_THROW(generate_capture(scene, o), ValidationError);
  o = options(1, 0.0, 0);
  EXPECT_THROW(generate_capture(scene, o), ValidationError);
  o = options(4, -1.0, 0);
  EXPECT_THROW(generate_capture(scene, o), ValidationError);
}

TEST(SceneFile, RoundTripsAtFloatPrecision) {
  GaussianScene s = testing::random_scene(9, 50);
  const GaussianScene back = parse_scene(serialize_scene(s));
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto &a = s.gaussians[i], &b = back.gaussians[i];
    EXPECT_LT((a.mean - b.mean).norm(), 1e-6);
    EXPECT_LT((a.log_scale - b.log_scale).norm(), 1e-6);
    EXPECT_LT((a.orientation.coeffs() - b.orientation.coeffs()).norm(), 1e-6);
    EXPECT_NEAR(a.opacity_logit, b.opacity_logit, 1e-6);
    EXPECT_LT((a.color - b.color).norm(), 1e-6);
  }
  EXPECT_LT((s.background - back.background).norm(), 1e-6);
  const GaussianScene again = parse_scene(serialize_scene(back));
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_LT((again.gaussians[i].mean - back.gaussians[i].mean).norm(), 1e-7);
    EXPECT_LT((again.gaussians[i].orientation.coeffs() - back.gaussians[i].orientation.coeffs()).norm(), 1e-7);
  }
}

TEST(SceneFile, RejectsCorruptInput) {
  const std::string bytes = serialize_scene(testing::random_scene(1, 4));
  EXPECT_THROW(parse_scene("not a scene"), ValidationError);
  EXPECT_THROW(parse_scene(bytes.substr(0, bytes.size() - 3)), ValidationError);
}

TEST(CameraFile, RoundTrip) {
  std::mt19937_64 rng(2);
  CameraList cams;
  for (int i = 0; i < 5; ++i) cams.push_back(testing::random_camera(i, 40 + i, 30));
  const CameraList back = cameras_from_json(cameras_to_json(cams));
  ASSERT_EQ(back.size(), cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    EXPECT_LT((back[i].pose.matrix() - cams[i].pose.matrix()).norm(), 1e-12);
    EXPECT_EQ(back[i].intrinsics.width, cams[i].intrinsics.width);
    EXPECT_EQ(back[i].intrinsics.fx, cams[i].intrinsics.fx);
    EXPECT_EQ(back[i].intrinsics.cy, cams[i].intrinsics.cy);
  }
  EXPECT_THROW(camera_from_json(json{{"width", 3}}), ValidationError);
}

TEST(Png, RoundTripOfQuantizedImage) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> byte(0, 255);
  Image im(7, 5);
  for (Eigen::Index i = 0; i < im.rgb.size(); ++i) im.rgb.data()[i] = byte(rng) / 255.0;
  for (Eigen::Index i = 0; i < im.alpha.size(); ++i) im.alpha(i) = byte(rng) / 255.0;
  const Image back = decode_png(encode_png(im));
  ASSERT_EQ(back.width, 7);
  ASSERT_EQ(back.height, 5);
  EXPECT_LT((back.rgb - im.rgb).abs().maxCoeff(), 1e-12);
  EXPECT_LT((back.alpha - im.alpha).abs().maxCoeff(), 1e-12);
  EXPECT_THROW(decode_png("garbage"), ValidationError);
}

TEST(Report, JsonCarriesEvidence) {
  PipelineReport r;
  r.inliers = {0, 1, 3};
  r.outliers = {2};
  r.evidence.push_back({2, true, 0.5, 0.1});
  Camera c = testing::random_camera(1, 8, 8);
  r.corrected[2] = c;
  r.initial_cameras = r.final_cameras = {c, c, c, c};
  r.scene_path = "scene.agscene";
  r.timings.push_back({"detect", 12.5});
  const json j = report_to_json(r);
  EXPECT_EQ(j.at("inliers"), json({0, 1, 3}));
  EXPECT_EQ(j.at("outliers"), json({2}));
  EXPECT_EQ(j.dump(), report_to_json(r).dump());
  EXPECT_NE(j.dump().find("0.5"), std::string::npos);
}

TEST(Metrics, JsonSchema) {
  MetricsSummary m;
  m.rot_acc[5.0] = 0.75;
  m.f1[0.01] = 0.5;
  m.psnr = 31.0;
  const json j = metrics_to_json(m);
  EXPECT_EQ(j.at("schema"), "agsmetrics/1");
  EXPECT_EQ(j.at("rot_acc").at("5"), 0.75);
  EXPECT_EQ(j.at("f1").at("0.01"), 0.5);
  EXPECT_EQ(j.at("psnr"), 31.0);
}

TEST(AtomicWrite, ReplacesContentsAndLeavesNoTemporaries) {
  const fs::path dir = scratch_dir("atomic");
  const fs::path file = dir / "nested" / "out.txt";
  write_file_atomic(file, "first");
  write_file_atomic(file, "second");
  EXPECT_EQ(read_file(file), "second");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "nested")) ++entries;
  EXPECT_EQ(entries, 1);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace ags
