#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace ags {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments for one flat parameter block. `step` returns the increment
/// to add to the parameters; the caller owns the parameterization (tangent
/// updates for rotations, for instance).
class Adam {
 public:
  Adam() = default;
  explicit Adam(Eigen::Index size, AdamOptions options = {})
      : options_(options), m_(Eigen::ArrayXd::Zero(size)), v_(Eigen::ArrayXd::Zero(size)) {}

  Eigen::Index size() const { return m_.size(); }
  int iterations() const { return t_; }

  /// lr is per element.
  Eigen::ArrayXd step(const Eigen::ArrayXd& grad, const Eigen::ArrayXd& lr) {
    if (grad.size() != m_.size() || lr.size() != m_.size()) throw std::invalid_argument("Adam: size mismatch");
    ++t_;
    m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * grad;
    v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * grad.square();
    const double c1 = 1.0 - std::pow(options_.beta1, t_);
    const double c2 = 1.0 - std::pow(options_.beta2, t_);
    return -lr * (m_ / c1) / ((v_ / c2).sqrt() + options_.epsilon);
  }

 private:
  AdamOptions options_;
  Eigen::ArrayXd m_, v_;
  int t_ = 0;
};

}  // namespace ags
