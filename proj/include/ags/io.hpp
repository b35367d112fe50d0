#pragma once

// File formats: the binary scene file, camera lists, PNG images and the JSON
// documents written by the command-line tool.

#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>

#include "ags/camera_geometry.hpp"
#include "ags/gaussian.hpp"
#include "ags/image.hpp"
#include "ags/metrics.hpp"
#include "ags/optimization.hpp"
#include "ags/synthetic.hpp"

namespace ags {

using json = nlohmann::json;

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// "AGSCENE v1\n", one line of JSON header, then count x 14 little-endian
/// float32: mean 3, log-scale 3, orientation w x y z, opacity logit, color 3.
std::string serialize_scene(const GaussianScene& scene);
GaussianScene parse_scene(std::string_view bytes);
void write_scene(const std::filesystem::path& path, const GaussianScene& scene);
GaussianScene read_scene(const std::filesystem::path& path);

json camera_to_json(const Camera& camera);
Camera camera_from_json(const json& j);
json cameras_to_json(std::span<const Camera> cameras);
CameraList cameras_from_json(const json& j);
void write_cameras(const std::filesystem::path& path, std::span<const Camera> cameras);
CameraList read_cameras(const std::filesystem::path& path);

/// 8-bit RGBA; channels map linearly to value / 255.
std::string encode_png(const Image& image);
Image decode_png(std::string_view bytes);
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

json report_to_json(const PipelineReport& report);
json metrics_to_json(const MetricsSummary& metrics);

/// Pretty-printed JSON followed by a newline.
std::string dump_json(const json& j);

}  // namespace ags
