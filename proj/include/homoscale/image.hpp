#pragma once

#include <Eigen/Dense>

#include <vector>

#include "homoscale/errors.hpp"

namespace homoscale {

using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-pixel boolean validity raster, indexed (y, x).
struct ValidityMask {
  int width = 0;
  int height = 0;
  MaskArray valid;

  ValidityMask() = default;
  ValidityMask(int w, int h, bool value = true)
      : width(w), height(h), valid(MaskArray::Constant(h, w, value)) {}

  bool all() const { return valid.all(); }
  std::ptrdiff_t count() const { return valid.count(); }
};

/// Raster image with 1 or 3 channels; samples in [0, 1], indexed (y, x).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Eigen::ArrayXXf> planes;

  Image() = default;
  Image(int w, int h, int channels, float fill = 0.f) : width(w), height(h) {
    if (w < 2 || h < 2) throw TooSmall("image must be at least 2x2");
    if (channels != 1 && channels != 3)
      throw ValidationError("images carry 1 or 3 channels");
    planes.assign(channels, Eigen::ArrayXXf::Constant(h, w, fill));
  }

  int channels() const { return static_cast<int>(planes.size()); }

  float& at(int c, int y, int x) { return planes[c](y, x); }
  float at(int c, int y, int x) const { return planes[c](y, x); }
};

/// Channel mean; returns a copy for single-channel input.
inline Image to_gray(const Image& img) {
  if (img.channels() == 1) return img;
  Image g(img.width, img.height, 1);
  g.planes[0] = (img.planes[0] + img.planes[1] + img.planes[2]) / 3.f;
  return g;
}

}  // namespace homoscale
