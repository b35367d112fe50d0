#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "ags/errors.hpp"
#include "ags/io.hpp"
#include "commands.hpp"

namespace ags::cli {
namespace {

namespace fs = std::filesystem;

const fs::path kFixtures = AGS_FIXTURE_DIR;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ags_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Exec {
  int status = -1;
  std::string output;
};

Exec run_ags(const std::string& args) {
  const std::string cmd = std::string(AGS_BINARY) + " " + args + " 2>&1";
  Exec e;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return e;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) e.output += buf;
  const int raw = ::pclose(pipe);
  e.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return e;
}

TEST(Config, Defaults) {
  const RunConfig cfg = parse_config(std::nullopt, {});
  EXPECT_EQ(cfg.reconstruction.steps, 500);
  EXPECT_EQ(cfg.reconstruction.n_gaussians, 4096);
  EXPECT_EQ(cfg.reconstruction.lambda_photo, 1e4);
  EXPECT_EQ(cfg.reconstruction.lambda_sds, 1.0);
  EXPECT_EQ(cfg.outliers.delta, 1e-3);
  EXPECT_EQ(cfg.outliers.iterations, 3);
  EXPECT_EQ(cfg.pose_search.n_candidates, 256);
  EXPECT_EQ(cfg.prior, "oracle");
  EXPECT_EQ(cfg.rot_thresholds_deg, (std::vector<double>{5.0, 15.0}));
}

TEST(Config, CommandLineWinsOverFile) {
  const fs::path dir = scratch_dir("precedence");
  write_file_atomic(dir / "c.json", R"({"schema": "agsconfig/1", "steps": 40, "n_gaussians": 99, "seed": 3})");
  Overrides o;
  o.steps = 7;
  const RunConfig cfg = parse_config(dir / "c.json", o);
  EXPECT_EQ(cfg.reconstruction.steps, 7);
  EXPECT_EQ(cfg.reconstruction.n_gaussians, 99);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.reconstruction.seed, 3u);
  EXPECT_EQ(parse_config(dir / "c.json", {}).reconstruction.steps, 40);
  fs::remove_all(dir);
}

TEST(Config, UnknownKeyIsNamed) {
  const fs::path dir = scratch_dir("unknown");
  write_file_atomic(dir / "c.json", R"({"stepz": 40})");
  try {
    parse_config(dir / "c.json", {});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("stepz"), std::string::npos);
  }
  write_file_atomic(dir / "c.json", R"({"steps": "many"})");
  EXPECT_THROW(parse_config(dir / "c.json", {}), ValidationError);
  write_file_atomic(dir / "c.json", R"({"steps": -1})");
  EXPECT_THROW(parse_config(dir / "c.json", {}), ValidationError);
  write_file_atomic(dir / "c.json", R"({"schema": "agsconfig/2"})");
  EXPECT_THROW(parse_config(dir / "c.json", {}), ValidationError);
  fs::remove_all(dir);
}

TEST(Config, EffectiveConfigRoundTrips) {
  Overrides o;
  o.steps = 12;
  o.seed = 4;
  const RunConfig cfg = parse_config(std::nullopt, o);
  const fs::path dir = scratch_dir("roundtrip");
  write_file_atomic(dir / "c.json", config_to_json(cfg));
  EXPECT_EQ(config_to_json(parse_config(dir / "c.json", {})), config_to_json(cfg));
  fs::remove_all(dir);
}

TEST(Binary, MissingPosesFileIsAValidationError) {
  const fs::path dir = scratch_dir("missing");
  const Exec e = run_ags("reconstruct --capture " + (kFixtures / "tiny_capture").string() + " --poses " +
                         (dir / "nope.json").string() + " --out " + (dir / "out").string());
  EXPECT_EQ(e.status, 1) << e.output;
  EXPECT_NE(e.output.find((dir / "nope.json").string()), std::string::npos) << e.output;
  fs::remove_all(dir);
}

TEST(Binary, UnknownConfigKeyExitsOne) {
  const fs::path dir = scratch_dir("badkey");
  write_file_atomic(dir / "c.json", R"({"stepz": 40})");
  const Exec e = run_ags("--config " + (dir / "c.json").string() + " config");
  EXPECT_EQ(e.status, 1);
  EXPECT_NE(e.output.find("stepz"), std::string::npos) << e.output;
  fs::remove_all(dir);
}

TEST(Binary, PrintsEffectiveConfig) {
  const Exec e = run_ags("--steps 33 config");
  ASSERT_EQ(e.status, 0) << e.output;
  EXPECT_EQ(json::parse(e.output).at("steps"), 33);
}

TEST(Binary, GenerateReconstructEvaluate) {
  const fs::path dir = scratch_dir("e2e");
  const std::string cfg = "--config " + (kFixtures / "tiny_config.json").string();
  ASSERT_EQ(run_ags(cfg + " generate --out " + (dir / "cap").string()).status, 0);
  for (const char* f : {"manifest.json", "scene.agscene", "gt_poses.json", "init_poses.json", "images/view_000.png"})
    EXPECT_TRUE(fs::exists(dir / "cap" / f)) << f;

  const Exec rec = run_ags(cfg + " reconstruct --capture " + (dir / "cap").string() + " --out " + (dir / "res").string());
  ASSERT_EQ(rec.status, 0) << rec.output;
  for (const char* f : {"scene.agscene", "poses.json", "report.json", "novel_views.png"})
    EXPECT_TRUE(fs::exists(dir / "res" / f)) << f;
  const json report = json::parse(read_file(dir / "res" / "report.json"));
  EXPECT_EQ(report.at("schema"), "agsreport/1");

  const Exec ev = run_ags(cfg + " evaluate --capture " + (dir / "cap").string() + " --result " + (dir / "res").string() +
                          " --out " + (dir / "eval").string());
  ASSERT_EQ(ev.status, 0) << ev.output;
  const json metrics = json::parse(read_file(dir / "eval" / "metrics.json"));
  EXPECT_EQ(metrics.at("schema"), "agsmetrics/1");
  fs::remove_all(dir);
}

TEST(Binary, RepeatedRunsAreByteIdentical) {
  const fs::path dir = scratch_dir("repeat");
  const std::string cfg = "--config " + (kFixtures / "tiny_config.json").string();
  const std::string cap = (kFixtures / "tiny_capture").string();
  std::string metrics[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path res = dir / ("res" + std::to_string(run)), ev = dir / ("eval" + std::to_string(run));
    ASSERT_EQ(run_ags(cfg + " reconstruct --capture " + cap + " --out " + res.string()).status, 0);
    ASSERT_EQ(run_ags(cfg + " evaluate --capture " + cap + " --result " + res.string() + " --out " + ev.string()).status, 0);
    metrics[run] = read_file(ev / "metrics.json");
  }
  EXPECT_EQ(metrics[0], metrics[1]);
  fs::remove_all(dir);
}

void expect_json_close(const json& got, const json& want, const std::string& path) {
  ASSERT_EQ(got.type(), want.type()) << path;
  if (want.is_object()) {
    ASSERT_EQ(got.size(), want.size()) << path;
    for (const auto& [k, v] : want.items()) {
      ASSERT_TRUE(got.contains(k)) << path << "/" << k;
      expect_json_close(got.at(k), v, path + "/" + k);
    }
  } else if (want.is_number()) {
    EXPECT_NEAR(got.get<double>(), want.get<double>(), 1e-6) << path;
  } else {
    EXPECT_EQ(got, want) << path;
  }
}

TEST(Fixture, MetricsMatchGolden) {
  const fs::path dir = scratch_dir("golden");
  const std::string cfg = "--config " + (kFixtures / "tiny_config.json").string();
  const std::string cap = (kFixtures / "tiny_capture").string();
  ASSERT_EQ(run_ags(cfg + " reconstruct --capture " + cap + " --out " + (dir / "res").string()).status, 0);
  ASSERT_EQ(run_ags(cfg + " evaluate --capture " + cap + " --result " + (dir / "res").string() + " --out " +
                    (dir / "eval").string())
                .status,
            0);
  expect_json_close(json::parse(read_file(dir / "eval" / "metrics.json")),
                    json::parse(read_file(kFixtures / "tiny_metrics.json")), "");
  fs::remove_all(dir);
}

TEST(Binary, SearchPoseWritesOneCamera) {
  const fs::path dir = scratch_dir("search");
  const fs::path cap = kFixtures / "tiny_capture";
  const CameraList gt = read_cameras(cap / "gt_poses.json");
  const CameraList inliers(gt.begin() + 1, gt.end());
  write_cameras(dir / "inliers.json", inliers);
  const Exec e = run_ags("search-pose --scene " + (cap / "scene.agscene").string() + " --image " +
                         (cap / "images" / "view_000.png").string() + " --poses " + (dir / "inliers.json").string() +
                         " --out " + dir.string());
  ASSERT_EQ(e.status, 0) << e.output;
  const CameraList found = read_cameras(dir / "pose.json");
  ASSERT_EQ(found.size(), 1u);
  EXPECT_LT(geodesic_angle(found[0].pose.rotation, gt[0].pose.rotation) * 180.0 / std::numbers::pi, 5.0);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace ags::cli
