#pragma once

// Diffusion-side quantities and the multi-view score-distillation gradient.
// Everything here lives in pixel space: images are H*W rows of RGB.

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ags/camera_geometry.hpp"
#include "ags/gaussian.hpp"
#include "ags/image.hpp"

namespace ags {

/// Cumulative signal retention alpha_bar_t for t = 1..T from a linear beta
/// schedule.
class NoiseSchedule {
 public:
  static NoiseSchedule Linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

  int steps() const { return static_cast<int>(alpha_bar_.size()); }
  double alpha_bar(int t) const;
  /// w(t) = 1 - alpha_bar_t
  double weight(int t) const { return 1.0 - alpha_bar(t); }

 private:
  std::vector<double> alpha_bar_;
};

/// z_t = sqrt(alpha_bar_t) x + sqrt(1 - alpha_bar_t) eps
PixelArray add_noise(const PixelArray& image, int t, const PixelArray& eps, const NoiseSchedule& schedule);

struct PriorQuery {
  int width = 0;
  int height = 0;
  PixelArray z_t;
  int t = 1;
  PixelArray cond_image;
  RelativeCameraEncoding rel_cam = RelativeCameraEncoding::Zero();

  void validate(int max_t) const;
};

struct PriorResponse {
  PixelArray eps_hat;
};

/// A noise predictor eps_phi(z_t; t, I_i, delta_pi_i).
class PriorBackend {
 public:
  virtual ~PriorBackend() = default;

  virtual PriorResponse predict(const PriorQuery& query) = 0;

  /// Answers a batch; responses are index-aligned with the queries.
  virtual std::vector<PriorResponse> predict_all(std::span<const PriorQuery> queries);

  virtual std::string identity() const = 0;
  virtual bool deterministic() const { return true; }
};

/// The prediction a perfect view-conditioned model would make if the true
/// novel view were `gt_render`: (z_t - sqrt(alpha_bar) gt) / sqrt(1 - alpha_bar).
PriorResponse oracle_predict(const PriorQuery& query, const PixelArray& gt_render, const NoiseSchedule& schedule);

/// Analytic backend backed by a ground-truth scene. It identifies the
/// conditioning view among its registered images, places the novel camera at
/// rel_cam relative to that view's true pose and renders the truth there.
class OraclePrior final : public PriorBackend {
 public:
  OraclePrior(GaussianScene truth, std::vector<Image> views, CameraList true_cameras, NoiseSchedule schedule);

  PriorResponse predict(const PriorQuery& query) override;
  std::string identity() const override { return "oracle"; }

  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  std::size_t match_view(const PixelArray& cond_image) const;

  GaussianScene truth_;
  std::vector<Image> views_;
  CameraList cameras_;
  NoiseSchedule schedule_;
};

/// Client for the remote noise-prediction service (POST /v1/predict_noise).
class RemotePrior final : public PriorBackend {
 public:
  explicit RemotePrior(std::string base_url, int max_in_flight = 4, double timeout_seconds = 60.0);

  PriorResponse predict(const PriorQuery& query) override;
  std::vector<PriorResponse> predict_all(std::span<const PriorQuery> queries) override;
  std::string identity() const override { return "remote:" + base_url_; }
  bool deterministic() const override { return false; }

  /// Model identifier reported by the service's health endpoint.
  std::string health();

 private:
  std::string base_url_;
  int max_in_flight_;
  double timeout_seconds_;
};

/// Wire encoding helpers (little-endian float32, base64, clamped to [-10, 10]).
std::string encode_pixels(const PixelArray& pixels);
PixelArray decode_pixels(const std::string& encoded, int width, int height);

/// lambda_sds * w(t) * (mean_i eps_phi(z_t; t, I_i, delta_pi_i) - eps), with
/// delta_pi_i the pose of the novel view relative to input view i. The mean is
/// unweighted across views.
PixelArray multiview_sds_gradient(const PixelArray& rendered, const Camera& novel_camera, std::span<const Image> inputs,
                                  std::span<const Camera> input_cameras, PriorBackend& prior,
                                  const NoiseSchedule& schedule, int t, const PixelArray& eps, double lambda_sds);

/// Uniform timestep in [0.02 T, t_max] where t_max anneals linearly from
/// 0.98 T to 0.5 T as `progress` goes from 0 to 1.
int sample_timestep(std::mt19937_64& rng, double progress, int steps);

}  // namespace ags
