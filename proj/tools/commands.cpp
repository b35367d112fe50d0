#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <memory>

#include "ags/errors.hpp"
#include "ags/io.hpp"
#include "ags/mesh.hpp"
#include "ags/metrics.hpp"
#include "ags/priors.hpp"
#include "ags/renderer.hpp"

namespace ags::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kConfigSchema = "agsconfig/1";
constexpr const char* kCaptureSchema = "agscapture/1";

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key \"" + key + "\" has the wrong type");
  }
}

/// One configurable value: how to read it from JSON and how to write it back.
struct Field {
  std::function<void(const json&)> set;
  std::function<json()> get;
};

template <typename T>
Field field_for(const std::string& key, T& target) {
  return {[&target, key](const json& v) { target = get_as<T>(v, key); }, [&target] { return json(target); }};
}

std::map<std::string, Field> fields(RunConfig& c) {
  auto& r = c.reconstruction;
  auto& o = c.outliers;
  auto& s = c.pose_search;
  auto& cap = c.capture;
  std::map<std::string, Field> f;
  f.emplace("seed", field_for("seed", c.seed));
  f.emplace("threads", field_for("threads", c.threads));
  f.emplace("prior", field_for("prior", c.prior));
  f.emplace("steps", field_for("steps", r.steps));
  f.emplace("n_gaussians", field_for("n_gaussians", r.n_gaussians));
  f.emplace("lr_mean", field_for("lr_mean", r.lr_mean));
  f.emplace("lr_log_scale", field_for("lr_log_scale", r.lr_log_scale));
  f.emplace("lr_orientation", field_for("lr_orientation", r.lr_orientation));
  f.emplace("lr_opacity", field_for("lr_opacity", r.lr_opacity));
  f.emplace("lr_color", field_for("lr_color", r.lr_color));
  f.emplace("lr_pose_rotation", field_for("lr_pose_rotation", r.lr_pose_rotation));
  f.emplace("lr_pose_translation", field_for("lr_pose_translation", r.lr_pose_translation));
  f.emplace("lr_final_fraction", field_for("lr_final_fraction", r.lr_final_fraction));
  f.emplace("pose_warmup_steps", field_for("pose_warmup_steps", r.pose_warmup_steps));
  f.emplace("views_per_step", field_for("views_per_step", r.views_per_step));
  f.emplace("blur_sigma_px", field_for("blur_sigma_px", r.blur_sigma_px));
  f.emplace("blur_anneal_fraction", field_for("blur_anneal_fraction", r.blur_anneal_fraction));
  f.emplace("lambda_photo", field_for("lambda_photo", r.lambda_photo));
  f.emplace("lambda_sds", field_for("lambda_sds", r.lambda_sds));
  f.emplace("sds_enabled", field_for("sds_enabled", r.sds_enabled));
  f.emplace("pose_opt_enabled", field_for("pose_opt_enabled", r.pose_opt_enabled));
  f.emplace("delta", field_for("delta", o.delta));
  f.emplace("iterations", field_for("iterations", o.iterations));
  f.emplace("detection_steps", field_for("detection_steps", o.detection_steps));
  f.emplace("min_inliers", field_for("min_inliers", o.min_inliers_override));
  f.emplace("n_candidates", field_for("n_candidates", s.n_candidates));
  f.emplace("refine_steps", field_for("refine_steps", s.refine_steps));
  f.emplace("refine_lr_rotation", field_for("refine_lr_rotation", s.lr_rotation));
  f.emplace("refine_lr_translation", field_for("refine_lr_translation", s.lr_translation));
  f.emplace("n_views", field_for("n_views", cap.n_views));
  f.emplace("width", field_for("width", cap.width));
  f.emplace("height", field_for("height", cap.height));
  f.emplace("fov_deg", field_for("fov_deg", cap.fov_deg));
  f.emplace("radius", field_for("radius", cap.radius));
  f.emplace("rot_noise_deg", field_for("rot_noise_deg", cap.rot_noise_deg));
  f.emplace("trans_noise", field_for("trans_noise", cap.trans_noise));
  f.emplace("n_outliers", field_for("n_outliers", cap.n_outliers));
  f.emplace("outlier_min_deg", field_for("outlier_min_deg", cap.outlier_min_deg));
  f.emplace("outlier_max_deg", field_for("outlier_max_deg", cap.outlier_max_deg));
  f.emplace("scene_style", field_for("scene_style", c.scene_style));
  f.emplace("scene_gaussians", field_for("scene_gaussians", c.scene_gaussians));
  f.emplace("mesh_resolution", field_for("mesh_resolution", c.mesh_resolution));
  f.emplace("f1_samples", field_for("f1_samples", c.f1_samples));
  f.emplace("rot_thresholds_deg", field_for("rot_thresholds_deg", c.rot_thresholds_deg));
  f.emplace("f1_thresholds", field_for("f1_thresholds", c.f1_thresholds));
  f.emplace("novel_views", field_for("novel_views", c.novel_views));
  return f;
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("file not found: " + path.string());
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

struct LoadedCapture {
  json manifest;
  GaussianScene gt_scene;
  ImageSet images;
  CameraList gt_cameras;
  CameraList init_cameras;
};

LoadedCapture load_capture(const fs::path& dir) {
  LoadedCapture out;
  out.manifest = read_json(dir / "manifest.json");
  const json& m = out.manifest;
  if (m.value("schema", "") != kCaptureSchema)
    throw ValidationError((dir / "manifest.json").string() + ": expected schema " + kCaptureSchema);
  try {
    out.gt_scene = read_scene(dir / m.at("scene").get<std::string>());
    for (const json& v : m.at("views")) {
      out.images.images.push_back(read_png(dir / v.at("image").get<std::string>()));
      out.gt_cameras.push_back(camera_from_json(v.at("gt_camera")));
      out.init_cameras.push_back(camera_from_json(v.at("init_camera")));
    }
  } catch (const json::exception& e) {
    throw ValidationError((dir / "manifest.json").string() + ": " + e.what());
  }
  out.images.validate();
  return out;
}

std::unique_ptr<PriorBackend> make_prior(const RunConfig& cfg, const LoadedCapture& capture) {
  if (cfg.prior == "oracle")
    return std::make_unique<OraclePrior>(capture.gt_scene, capture.images.images, capture.gt_cameras,
                                         NoiseSchedule::Linear());
  std::string url = cfg.prior.substr(std::string("remote").size());
  if (!url.empty() && url.front() == ':') url.erase(0, 1);
  if (url.empty()) {
    const char* env = std::getenv("AGS_PRIOR_URL");
    if (env == nullptr || *env == '\0')
      throw ValidationError("--prior remote needs a URL (remote:URL) or AGS_PRIOR_URL");
    url = env;
  }
  auto prior = std::make_unique<RemotePrior>(url);
  std::cerr << "remote prior " << url << " model: " << prior->health() << "\n";
  return prior;
}

/// Horizontal strip of renders from evenly spread viewpoints.
Image novel_view_strip(const GaussianScene& scene, std::span<const Camera> cameras, int count) {
  const Eigen::Vector3d center = viewing_center(cameras);
  double radius = 0.0;
  for (const Camera& c : cameras) radius += (c.pose.center() - center).norm();
  radius /= static_cast<double>(cameras.size());
  const Intrinsics k = cameras.front().intrinsics;
  Image strip(k.width * count, k.height);
  const auto poses = sample_sphere_poses(count + 2, radius, center);
  for (int v = 0; v < count; ++v) {
    // Skip the two poles of the lattice; they are degenerate look-at cases.
    const RenderedImage r = render(scene, Camera{poses[static_cast<std::size_t>(v + 1)], k});
    for (int y = 0; y < k.height; ++y)
      for (int x = 0; x < k.width; ++x) {
        const Eigen::Index src = static_cast<Eigen::Index>(y) * k.width + x;
        const Eigen::Index dst = static_cast<Eigen::Index>(y) * strip.width + v * k.width + x;
        strip.rgb.row(dst) = r.rgb.row(src);
        strip.alpha(dst) = r.alpha(src);
      }
  }
  return strip;
}

}  // namespace

void RunConfig::validate() const {
  reconstruction.validate();
  outliers.validate();
  capture.validate();
  parse_scene_style(scene_style);
  if (scene_gaussians < 1) throw ValidationError("scene_gaussians must be >= 1");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  if (prior != "oracle" && prior.rfind("remote", 0) != 0)
    throw ValidationError("prior must be \"oracle\" or \"remote:<url>\", got \"" + prior + "\"");
  if (mesh_resolution < 8) throw ValidationError("mesh_resolution must be >= 8");
  if (f1_samples < 1) throw ValidationError("f1_samples must be >= 1");
  if (pose_search.n_candidates < 1) throw ValidationError("n_candidates must be >= 1");
  if (pose_search.refine_steps < 0) throw ValidationError("refine_steps must be >= 0");
  if (novel_views < 0) throw ValidationError("novel_views must be >= 0");
}

RunConfig parse_config(const std::optional<fs::path>& file, const Overrides& overrides) {
  RunConfig cfg;
  if (file) {
    const json doc = read_json(*file);
    if (!doc.is_object()) throw ValidationError(file->string() + ": expected a JSON object");
    auto f = fields(cfg);
    for (const auto& [key, value] : doc.items()) {
      if (key == "schema") {
        if (value != kConfigSchema) throw ValidationError("config schema must be \"" + std::string(kConfigSchema) + "\"");
        continue;
      }
      const auto it = f.find(key);
      if (it == f.end()) throw ValidationError("unknown config key \"" + key + "\"");
      it->second.set(value);
    }
  }
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.steps) cfg.reconstruction.steps = *overrides.steps;
  if (overrides.prior) cfg.prior = *overrides.prior;
  if (overrides.threads) cfg.threads = *overrides.threads;
  cfg.reconstruction.seed = cfg.seed;
  cfg.capture.seed = cfg.seed + 1;
  cfg.validate();
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  RunConfig copy = cfg;
  json doc = {{"schema", kConfigSchema}};
  for (const auto& [key, field] : fields(copy)) doc[key] = field.get();
  return dump_json(doc);
}

void run_generate(const RunConfig& cfg, const fs::path& out_dir) {
  const GaussianScene scene = generate_scene(cfg.seed, cfg.scene_gaussians, parse_scene_style(cfg.scene_style));
  const Capture cap = generate_capture(scene, cfg.capture);

  json views = json::array();
  for (std::size_t i = 0; i < cap.images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/view_%03zu.png", i);
    write_png(out_dir / name, cap.images[i]);
    views.push_back({{"image", name},
                     {"gt_camera", camera_to_json(cap.gt_cameras[i])},
                     {"init_camera", camera_to_json(cap.init_cameras[i])},
                     {"outlier", cap.views[i].outlier},
                     {"rotation_error_deg", cap.views[i].rotation_error_deg},
                     {"translation_error", cap.views[i].translation_error}});
  }
  write_scene(out_dir / "scene.agscene", scene);
  write_cameras(out_dir / "gt_poses.json", cap.gt_cameras);
  write_cameras(out_dir / "init_poses.json", cap.init_cameras);
  const CaptureOptions& o = cap.options;
  const json manifest = {{"schema", kCaptureSchema},
                         {"seed", cfg.seed},
                         {"scene", "scene.agscene"},
                         {"scene_style", cfg.scene_style},
                         {"scene_gaussians", cfg.scene_gaussians},
                         {"gt_poses", "gt_poses.json"},
                         {"init_poses", "init_poses.json"},
                         {"options",
                          {{"n_views", o.n_views},
                           {"width", o.width},
                           {"height", o.height},
                           {"fov_deg", o.fov_deg},
                           {"radius", o.radius},
                           {"rot_noise_deg", o.rot_noise_deg},
                           {"trans_noise", o.trans_noise},
                           {"n_outliers", o.n_outliers},
                           {"outlier_min_deg", o.outlier_min_deg},
                           {"outlier_max_deg", o.outlier_max_deg}}},
                         {"views", views}};
  write_file_atomic(out_dir / "manifest.json", dump_json(manifest));
}

void run_reconstruct(const RunConfig& cfg, const ReconstructPaths& paths) {
  LoadedCapture capture = load_capture(paths.capture);
  CameraList init = capture.init_cameras;
  if (paths.poses) {
    init = read_cameras(*paths.poses);
    if (init.size() != capture.images.size())
      throw ValidationError(paths.poses->string() + ": expected " + std::to_string(capture.images.size()) + " cameras");
  }
  std::unique_ptr<PriorBackend> prior;
  if (cfg.reconstruction.sds_enabled) prior = make_prior(cfg, capture);

  PipelineResult result = run_pipeline(capture.images, init, cfg.reconstruction, cfg.outliers, prior.get(), cfg.pose_search);
  result.report.scene_path = "scene.agscene";
  write_scene(paths.out / "scene.agscene", result.scene);
  write_cameras(paths.out / "poses.json", result.cameras);
  write_file_atomic(paths.out / "report.json", dump_json(report_to_json(result.report)));
  if (cfg.novel_views > 0) write_png(paths.out / "novel_views.png", novel_view_strip(result.scene, result.cameras, cfg.novel_views));
}

void run_evaluate(const RunConfig& cfg, const EvaluatePaths& paths) {
  const LoadedCapture capture = load_capture(paths.capture);
  const GaussianScene scene = read_scene(paths.result / "scene.agscene");
  const CameraList cams = read_cameras(paths.result / "poses.json");
  if (cams.size() != capture.gt_cameras.size())
    throw ValidationError((paths.result / "poses.json").string() + ": camera count does not match the capture");

  MetricsSummary m;
  for (double tau : cfg.rot_thresholds_deg) m.rot_acc[tau] = rotation_accuracy(cams, capture.gt_cameras, tau);
  m.cc_acc = camera_center_accuracy(cams, capture.gt_cameras, 0.1);
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const RenderedImage r = render(scene, cams[i]);
    m.psnr += psnr(r.rgb, capture.images[i].rgb);
    m.proxy += perceptual_proxy(r.rgb, capture.images[i].rgb, r.width, r.height);
  }
  m.psnr /= static_cast<double>(cams.size());
  m.proxy /= static_cast<double>(cams.size());

  // Bring the predicted surface into the ground-truth frame through the
  // camera-center similarity, and measure distances in units of the
  // ground-truth mesh extent.
  std::vector<Eigen::Vector3d> pred_centers, gt_centers;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    pred_centers.push_back(cams[i].pose.center());
    gt_centers.push_back(capture.gt_cameras[i].pose.center());
  }
  const Similarity sim = umeyama_align(pred_centers, gt_centers);
  TriangleMesh pred_mesh = extract_mesh(scene, cfg.mesh_resolution);
  for (auto& v : pred_mesh.vertices) v = sim(v);
  const TriangleMesh gt_mesh = extract_mesh(capture.gt_scene, cfg.mesh_resolution);
  double extent = 1.0;
  if (!gt_mesh.empty()) {
    Eigen::Vector3d lo = gt_mesh.vertices.front(), hi = lo;
    for (const auto& v : gt_mesh.vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    extent = (hi - lo).maxCoeff();
  }
  for (double tau : cfg.f1_thresholds) m.f1[tau] = mesh_f1(pred_mesh, gt_mesh, tau * extent, cfg.f1_samples, cfg.seed);

  write_file_atomic(paths.out, dump_json(metrics_to_json(m)));
}

void run_search_pose(const RunConfig& cfg, const SearchPosePaths& paths) {
  const GaussianScene scene = read_scene(paths.scene);
  const Image image = read_png(paths.image);
  const CameraList inliers = read_cameras(paths.poses);
  if (inliers.empty()) throw ValidationError(paths.poses.string() + ": no cameras");
  Intrinsics k = inliers.front().intrinsics;
  if (k.width != image.width || k.height != image.height)
    throw ValidationError(paths.image.string() + ": image size differs from the cameras' intrinsics");
  const PoseSearchResult found = correct_outlier_pose(scene, image, k, inliers, cfg.pose_search);
  const Camera out[] = {found.camera};
  write_cameras(paths.out, out);
}

}  // namespace ags::cli
