#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace ags {

/// Per-pixel RGB rows, pixel (x, y) at row y * width + x.
using PixelArray = Eigen::Array<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Linear RGB image in [0, 1] with an alpha mask.
struct Image {
  int width = 0;
  int height = 0;
  PixelArray rgb;
  Eigen::ArrayXd alpha;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(PixelArray::Zero(w * h, 3)), alpha(Eigen::ArrayXd::Ones(w * h)) {}
  Image(int w, int h, PixelArray pixels) : width(w), height(h), rgb(std::move(pixels)), alpha(Eigen::ArrayXd::Ones(w * h)) {
    if (rgb.rows() != static_cast<Eigen::Index>(w) * h) throw std::invalid_argument("Image: pixel count mismatch");
  }

  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(width) * height; }
  auto pixel(int x, int y) { return rgb.row(static_cast<Eigen::Index>(y) * width + x); }
  auto pixel(int x, int y) const { return rgb.row(static_cast<Eigen::Index>(y) * width + x); }
};

struct ImageSet {
  std::vector<Image> images;

  std::size_t size() const { return images.size(); }
  const Image& operator[](std::size_t i) const { return images[i]; }

  void validate() const {
    for (const auto& im : images) {
      if (im.width != images.front().width || im.height != images.front().height)
        throw std::invalid_argument("ImageSet: images must share dimensions");
      if (im.alpha.size() != im.pixel_count()) throw std::invalid_argument("ImageSet: alpha mask size mismatch");
    }
  }
};

inline void require_same_shape(const PixelArray& a, const PixelArray& b, const char* what) {
  if (a.rows() != b.rows()) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace ags
