#include "ags/priors.hpp"

#include <httplib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <future>
#include <json.hpp>
#include <limits>

#include "ags/errors.hpp"
#include "ags/renderer.hpp"
#include "base64.hpp"

namespace ags {

using json = nlohmann::json;

namespace {
constexpr double kWireClamp = 10.0;
}

NoiseSchedule NoiseSchedule::Linear(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw std::invalid_argument("NoiseSchedule: need at least 2 timesteps");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start < beta_end))
    throw std::invalid_argument("NoiseSchedule: betas must satisfy 0 < start < end < 1");
  NoiseSchedule s;
  s.alpha_bar_.resize(static_cast<std::size_t>(steps));
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double beta = beta_start + (beta_end - beta_start) * i / (steps - 1.0);
    running *= 1.0 - beta;
    s.alpha_bar_[static_cast<std::size_t>(i)] = running;
  }
  return s;
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 1 || t > steps()) throw std::out_of_range("NoiseSchedule: timestep " + std::to_string(t) + " out of range");
  return alpha_bar_[static_cast<std::size_t>(t - 1)];
}

PixelArray add_noise(const PixelArray& image, int t, const PixelArray& eps, const NoiseSchedule& schedule) {
  require_same_shape(image, eps, "add_noise");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * image + std::sqrt(1.0 - ab) * eps;
}

void PriorQuery::validate(int max_t) const {
  const Eigen::Index n = static_cast<Eigen::Index>(width) * height;
  if (width <= 0 || height <= 0) throw std::invalid_argument("PriorQuery: empty image");
  if (z_t.rows() != n || cond_image.rows() != n) throw std::invalid_argument("PriorQuery: shape mismatch");
  if (t < 1 || t > max_t) throw std::out_of_range("PriorQuery: timestep out of range");
}

std::vector<PriorResponse> PriorBackend::predict_all(std::span<const PriorQuery> queries) {
  std::vector<PriorResponse> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(predict(q));
  return out;
}

PriorResponse oracle_predict(const PriorQuery& query, const PixelArray& gt_render, const NoiseSchedule& schedule) {
  require_same_shape(query.z_t, gt_render, "oracle_predict");
  const double ab = schedule.alpha_bar(query.t);
  return {(query.z_t - std::sqrt(ab) * gt_render) / std::sqrt(1.0 - ab)};
}

OraclePrior::OraclePrior(GaussianScene truth, std::vector<Image> views, CameraList true_cameras,
                         NoiseSchedule schedule)
    : truth_(std::move(truth)), views_(std::move(views)), cameras_(std::move(true_cameras)),
      schedule_(std::move(schedule)) {
  if (views_.size() != cameras_.size()) throw std::invalid_argument("OraclePrior: views and cameras differ in count");
  if (views_.empty()) throw std::invalid_argument("OraclePrior: needs at least one registered view");
}

std::size_t OraclePrior::match_view(const PixelArray& cond_image) const {
  std::size_t best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < views_.size(); ++i) {
    if (views_[i].rgb.rows() != cond_image.rows()) continue;
    const double err = (views_[i].rgb - cond_image).square().sum();
    if (err < best_err) {
      best_err = err;
      best = i;
    }
    if (err == 0.0) break;
  }
  if (!std::isfinite(best_err)) throw PriorUnavailableError("oracle prior: conditioning image has no registered match");
  return best;
}

PriorResponse OraclePrior::predict(const PriorQuery& query) {
  query.validate(schedule_.steps());
  const Camera& source = cameras_[match_view(query.cond_image)];
  Camera target;
  target.pose = decode_relative_pose(query.rel_cam) * source.pose;
  target.intrinsics = source.intrinsics;
  target.intrinsics.fx *= std::exp(query.rel_cam(16));
  target.intrinsics.fy *= std::exp(query.rel_cam(17));
  target.intrinsics.width = query.width;
  target.intrinsics.height = query.height;
  return oracle_predict(query, render(truth_, target).rgb, schedule_);
}

std::string encode_pixels(const PixelArray& pixels) {
  std::string bytes(static_cast<std::size_t>(pixels.size()) * sizeof(float), '\0');
  std::size_t offset = 0;
  for (Eigen::Index r = 0; r < pixels.rows(); ++r)
    for (Eigen::Index c = 0; c < 3; ++c) {
      float v = static_cast<float>(std::clamp(pixels(r, c), -kWireClamp, kWireClamp));
      std::uint32_t word;
      std::memcpy(&word, &v, sizeof(word));
      if constexpr (std::endian::native == std::endian::big) word = __builtin_bswap32(word);
      std::memcpy(bytes.data() + offset, &word, sizeof(word));
      offset += sizeof(word);
    }
  return detail::base64_encode(bytes);
}

PixelArray decode_pixels(const std::string& encoded, int width, int height) {
  const std::string bytes = detail::base64_decode(encoded);
  const Eigen::Index n = static_cast<Eigen::Index>(width) * height;
  if (bytes.size() != static_cast<std::size_t>(n) * 3 * sizeof(float))
    throw std::invalid_argument("decode_pixels: payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string(n * 3 * 4));
  PixelArray out(n, 3);
  std::size_t offset = 0;
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) {
      std::uint32_t word;
      std::memcpy(&word, bytes.data() + offset, sizeof(word));
      if constexpr (std::endian::native == std::endian::big) word = __builtin_bswap32(word);
      float v;
      std::memcpy(&v, &word, sizeof(v));
      out(r, c) = std::clamp(static_cast<double>(v), -kWireClamp, kWireClamp);
      offset += sizeof(word);
    }
  return out;
}

RemotePrior::RemotePrior(std::string base_url, int max_in_flight, double timeout_seconds)
    : base_url_(std::move(base_url)), max_in_flight_(std::max(1, max_in_flight)), timeout_seconds_(timeout_seconds) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

namespace {

httplib::Client make_client(const std::string& url, double timeout_seconds) {
  httplib::Client client(url);
  const auto secs = static_cast<time_t>(timeout_seconds);
  const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  return client;
}

}  // namespace

PriorResponse RemotePrior::predict(const PriorQuery& query) {
  query.validate(std::numeric_limits<int>::max());
  json body = {{"z_t", encode_pixels(query.z_t)},
               {"h", query.height},
               {"w", query.width},
               {"t", query.t},
               {"cond_image", encode_pixels(query.cond_image)},
               {"rel_cam", std::vector<double>(query.rel_cam.data(), query.rel_cam.data() + 18)}};
  auto client = make_client(base_url_, timeout_seconds_);
  const auto res = client.Post("/v1/predict_noise", body.dump(), "application/json");
  if (!res) throw PriorUnavailableError("remote prior: request to " + base_url_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw PriorUnavailableError("remote prior: HTTP " + std::to_string(res->status) + ": " + res->body);
  try {
    const json reply = json::parse(res->body);
    PriorResponse out{decode_pixels(reply.at("eps").get<std::string>(), query.width, query.height)};
    if (!out.eps_hat.allFinite()) throw std::invalid_argument("non-finite noise prediction");
    return out;
  } catch (const std::exception& e) {
    throw PriorUnavailableError(std::string("remote prior: malformed response: ") + e.what());
  }
}

std::vector<PriorResponse> RemotePrior::predict_all(std::span<const PriorQuery> queries) {
  std::vector<PriorResponse> out(queries.size());
  for (std::size_t begin = 0; begin < queries.size(); begin += static_cast<std::size_t>(max_in_flight_)) {
    const std::size_t end = std::min(queries.size(), begin + static_cast<std::size_t>(max_in_flight_));
    std::vector<std::future<PriorResponse>> pending;
    for (std::size_t i = begin; i < end; ++i)
      pending.push_back(std::async(std::launch::async, [this, &queries, i] { return predict(queries[i]); }));
    for (std::size_t i = begin; i < end; ++i) out[i] = pending[i - begin].get();
  }
  return out;
}

std::string RemotePrior::health() {
  auto client = make_client(base_url_, timeout_seconds_);
  auto res = client.Post("/v1/health", "{}", "application/json");
  if (res && (res->status == 404 || res->status == 405)) res = client.Get("/v1/health");
  if (!res) throw PriorUnavailableError("remote prior: health check failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw PriorUnavailableError("remote prior: health HTTP " + std::to_string(res->status));
  try {
    const json reply = json::parse(res->body);
    if (reply.at("status").get<std::string>() != "ok") throw std::invalid_argument("status is not ok");
    return reply.at("model").get<std::string>();
  } catch (const std::exception& e) {
    throw PriorUnavailableError(std::string("remote prior: malformed health response: ") + e.what());
  }
}

PixelArray multiview_sds_gradient(const PixelArray& rendered, const Camera& novel_camera, std::span<const Image> inputs,
                                  std::span<const Camera> input_cameras, PriorBackend& prior,
                                  const NoiseSchedule& schedule, int t, const PixelArray& eps, double lambda_sds) {
  if (inputs.empty()) throw std::invalid_argument("multiview_sds_gradient: need at least one input view");
  if (inputs.size() != input_cameras.size()) throw std::invalid_argument("multiview_sds_gradient: inputs/cameras mismatch");
  require_same_shape(rendered, eps, "multiview_sds_gradient");
  const int width = novel_camera.intrinsics.width, height = novel_camera.intrinsics.height;
  const PixelArray z_t = add_noise(rendered, t, eps, schedule);

  std::vector<PriorQuery> queries;
  queries.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    require_same_shape(rendered, inputs[i].rgb, "multiview_sds_gradient");
    queries.push_back({width, height, z_t, t, inputs[i].rgb, encode_relative_camera(input_cameras[i], novel_camera)});
  }
  std::vector<PriorResponse> responses;
  try {
    responses = prior.predict_all(queries);
  } catch (const PriorUnavailableError&) {
    throw;
  } catch (const std::exception& e) {
    throw PriorUnavailableError(std::string("prior backend failed: ") + e.what());
  }

  PixelArray mean_eps = PixelArray::Zero(rendered.rows(), 3);
  for (const auto& r : responses) {
    require_same_shape(rendered, r.eps_hat, "multiview_sds_gradient");
    mean_eps += r.eps_hat;
  }
  mean_eps /= static_cast<double>(responses.size());
  return (lambda_sds * schedule.weight(t)) * (mean_eps - eps);
}

int sample_timestep(std::mt19937_64& rng, double progress, int steps) {
  const double p = std::clamp(progress, 0.0, 1.0);
  const int lo = std::max(1, static_cast<int>(std::lround(0.02 * steps)));
  const int hi = std::max(lo, static_cast<int>(std::lround((0.98 - 0.48 * p) * steps)));
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace ags
