#include "ags/io.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "ags/errors.hpp"

namespace ags {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSceneMagic = "AGSCENE v1";
constexpr int kSceneFields = 14;

std::uint32_t to_little_endian(std::uint32_t word) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(word);
  return word;
}

void put_float(std::string& out, double value) {
  const auto f = static_cast<float>(value);
  std::uint32_t word;
  std::memcpy(&word, &f, sizeof(word));
  word = to_little_endian(word);
  out.append(reinterpret_cast<const char*>(&word), sizeof(word));
}

double get_float(std::string_view bytes, std::size_t offset) {
  std::uint32_t word;
  std::memcpy(&word, bytes.data() + offset, sizeof(word));
  word = to_little_endian(word);
  float f;
  std::memcpy(&f, &word, sizeof(f));
  return f;
}

json pose_matrix_json(const Pose& pose) {
  const Eigen::Matrix4d m = pose.matrix();
  json out = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out.push_back(m(r, c));
  return out;
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string serialize_scene(const GaussianScene& scene) {
  const json header = {{"count", scene.size()},
                       {"background", {scene.background.x(), scene.background.y(), scene.background.z()}},
                       {"fields",
                        {"mean_x", "mean_y", "mean_z", "log_scale_x", "log_scale_y", "log_scale_z", "rot_w", "rot_x",
                         "rot_y", "rot_z", "opacity_logit", "color_r", "color_g", "color_b"}}};
  std::string out(kSceneMagic);
  out += '\n';
  out += header.dump();
  out += '\n';
  out.reserve(out.size() + scene.size() * kSceneFields * 4);
  for (const Gaussian3D& g : scene.gaussians) {
    for (int k = 0; k < 3; ++k) put_float(out, g.mean(k));
    for (int k = 0; k < 3; ++k) put_float(out, g.log_scale(k));
    put_float(out, g.orientation.w());
    put_float(out, g.orientation.x());
    put_float(out, g.orientation.y());
    put_float(out, g.orientation.z());
    put_float(out, g.opacity_logit);
    for (int k = 0; k < 3; ++k) put_float(out, g.color(k));
  }
  return out;
}

GaussianScene parse_scene(std::string_view bytes) {
  const auto first = bytes.find('\n');
  if (first == std::string_view::npos || bytes.substr(0, first) != kSceneMagic)
    throw ValidationError("scene file: missing \"AGSCENE v1\" header");
  const auto second = bytes.find('\n', first + 1);
  if (second == std::string_view::npos) throw ValidationError("scene file: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(first + 1, second - first - 1));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scene file: malformed header: ") + e.what());
  }
  const auto count = header.at("count").get<std::size_t>();
  const std::string_view payload = bytes.substr(second + 1);
  if (payload.size() != count * kSceneFields * 4)
    throw ValidationError("scene file: expected " + std::to_string(count * kSceneFields * 4) + " payload bytes, found " +
                          std::to_string(payload.size()));
  GaussianScene scene;
  const auto bg = header.at("background").get<std::vector<double>>();
  if (bg.size() != 3) throw ValidationError("scene file: background must have 3 entries");
  scene.background = {bg[0], bg[1], bg[2]};
  scene.gaussians.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto f = [&](int k) { return get_float(payload, (i * kSceneFields + static_cast<std::size_t>(k)) * 4); };
    Gaussian3D& g = scene.gaussians[i];
    g.mean = {f(0), f(1), f(2)};
    g.log_scale = {f(3), f(4), f(5)};
    g.orientation = Eigen::Quaterniond(f(6), f(7), f(8), f(9));
    g.opacity_logit = f(10);
    g.color = {f(11), f(12), f(13)};
    if (!g.mean.allFinite() || !g.log_scale.allFinite() || !g.orientation.coeffs().allFinite() ||
        !std::isfinite(g.opacity_logit) || !g.color.allFinite() || g.orientation.norm() < 1e-12)
      throw ValidationError("scene file: gaussian " + std::to_string(i) + " has invalid parameters");
    enforce_invariants(g);
  }
  return scene;
}

void write_scene(const fs::path& path, const GaussianScene& scene) { write_file_atomic(path, serialize_scene(scene)); }

GaussianScene read_scene(const fs::path& path) { return parse_scene(read_file(path)); }

json camera_to_json(const Camera& camera) {
  const Intrinsics& k = camera.intrinsics;
  return {{"world_to_camera", pose_matrix_json(camera.pose)},
          {"fx", k.fx},
          {"fy", k.fy},
          {"cx", k.cx},
          {"cy", k.cy},
          {"width", k.width},
          {"height", k.height}};
}

Camera camera_from_json(const json& j) {
  try {
    const auto m = j.at("world_to_camera").get<std::vector<double>>();
    if (m.size() != 16) throw ValidationError("world_to_camera must have 16 entries");
    Eigen::Matrix4d mat;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) mat(r, c) = m[static_cast<std::size_t>(4 * r + c)];
    Camera cam;
    cam.pose = Pose::FromMatrix(mat);
    if (!cam.pose.allFinite() || !is_rotation(cam.pose.rotation, 1e-6))
      throw ValidationError("world_to_camera is not a rigid transform");
    cam.pose.rotation = orthonormalize(cam.pose.rotation);
    cam.intrinsics = {j.at("fx").get<double>(),  j.at("fy").get<double>(),    j.at("cx").get<double>(),
                      j.at("cy").get<double>(),  j.at("width").get<int>(),    j.at("height").get<int>()};
    cam.intrinsics.validate();
    return cam;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("camera: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("camera: ") + e.what());
  }
}

json cameras_to_json(std::span<const Camera> cameras) {
  json out = json::array();
  for (const Camera& c : cameras) out.push_back(camera_to_json(c));
  return out;
}

CameraList cameras_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("pose file: expected a list of cameras");
  CameraList out;
  for (const json& c : j) out.push_back(camera_from_json(c));
  return out;
}

void write_cameras(const fs::path& path, std::span<const Camera> cameras) {
  write_file_atomic(path, dump_json(cameras_to_json(cameras)));
}

CameraList read_cameras(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("pose file not found: " + path.string());
  try {
    return cameras_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ValidationError("pose file " + path.string() + ": " + e.what());
  }
}

std::string encode_png(const Image& image) {
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(image.pixel_count()) * 4);
  auto to_byte = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  for (Eigen::Index i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) pixels[static_cast<std::size_t>(4 * i + c)] = to_byte(image.rgb(i, c));
    pixels[static_cast<std::size_t>(4 * i + 3)] = to_byte(image.alpha(i));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw std::runtime_error(std::string("png encode: ") + png.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, pixels.data(), 0, nullptr))
    throw std::runtime_error(std::string("png encode: ") + png.message);
  out.resize(size);
  return out;
}

Image decode_png(std::string_view bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()))
    throw ValidationError(std::string("png decode: ") + png.message);
  png.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ValidationError(std::string("png decode: ") + png.message);
  }
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  for (Eigen::Index i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) image.rgb(i, c) = pixels[static_cast<std::size_t>(4 * i + c)] / 255.0;
    image.alpha(i) = pixels[static_cast<std::size_t>(4 * i + 3)] / 255.0;
  }
  return image;
}

void write_png(const fs::path& path, const Image& image) { write_file_atomic(path, encode_png(image)); }

Image read_png(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("image not found: " + path.string());
  return decode_png(read_file(path));
}

json report_to_json(const PipelineReport& report) {
  auto test_json = [](const OutlierTest& t) {
    return json{{"index", t.index}, {"flagged", t.flagged}, {"e_with", t.e_with}, {"e_without", t.e_without}};
  };
  json iterations = json::array();
  for (const PipelineIteration& it : report.iterations) {
    json tests = json::array();
    for (const OutlierTest& t : it.tests) tests.push_back(test_json(t));
    iterations.push_back({{"k", it.k},
                          {"cameras", cameras_to_json(it.cameras)},
                          {"inliers", it.inliers},
                          {"outliers", it.outliers},
                          {"tests", tests}});
  }
  json evidence = json::array();
  for (const OutlierTest& t : report.evidence) evidence.push_back(test_json(t));
  json corrected = json::array();
  for (const auto& [index, cam] : report.corrected) corrected.push_back({{"index", index}, {"camera", camera_to_json(cam)}});
  json timings = json::array();
  for (const StageTiming& t : report.timings) timings.push_back({{"stage", t.stage}, {"milliseconds", t.milliseconds}});
  return {{"schema", "agsreport/1"},
          {"iterations", iterations},
          {"inliers", report.inliers},
          {"outliers", report.outliers},
          {"evidence", evidence},
          {"corrected", corrected},
          {"initial_cameras", cameras_to_json(report.initial_cameras)},
          {"final_cameras", cameras_to_json(report.final_cameras)},
          {"scene", report.scene_path},
          {"timings", timings}};
}

json metrics_to_json(const MetricsSummary& metrics) {
  json rot = json::object(), f1 = json::object();
  auto key = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  for (const auto& [tau, v] : metrics.rot_acc) rot[key(tau)] = v;
  for (const auto& [tau, v] : metrics.f1) f1[key(tau)] = v;
  return {{"schema", "agsmetrics/1"},
          {"rot_acc", rot},
          {"cc_acc", metrics.cc_acc},
          {"psnr", metrics.psnr},
          {"proxy", metrics.proxy},
          {"f1", f1}};
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace ags
