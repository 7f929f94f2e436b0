#include "homoscale/warp.hpp"

#include <cmath>

#include "homoscale/flow.hpp"

namespace homoscale {

WarpResult warp(const Image& img, const Homography& h,
                const ValidityMask* src_mask, int out_w, int out_h) {
  if (src_mask &&
      (src_mask->width != img.width || src_mask->height != img.height))
    throw ShapeMismatch("mask dimensions do not match the image");
  if (out_w <= 0) out_w = img.width;
  if (out_h <= 0) out_h = img.height;

  const Homography hinv = invert(h);
  const Eigen::Matrix3d& m = hinv.matrix();
  WarpResult r{Image(out_w, out_h, img.channels()),
               ValidityMask(out_w, out_h, false)};

  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double w = m(2, 0) * x + m(2, 1) * y + m(2, 2);
      if (std::abs(w) <= 1e-12) continue;
      const double sx = (m(0, 0) * x + m(0, 1) * y + m(0, 2)) / w;
      const double sy = (m(1, 0) * x + m(1, 1) * y + m(1, 2)) / w;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      if (x0 < 0 || y0 < 0 || x0 + 1 > img.width - 1 || y0 + 1 > img.height - 1)
        continue;
      if (src_mask && !(src_mask->valid(y0, x0) && src_mask->valid(y0, x0 + 1) &&
                        src_mask->valid(y0 + 1, x0) &&
                        src_mask->valid(y0 + 1, x0 + 1)))
        continue;
      const float ax = static_cast<float>(sx - x0);
      const float ay = static_cast<float>(sy - y0);
      r.mask.valid(y, x) = true;
      for (int c = 0; c < img.channels(); ++c) {
        const auto& p = img.planes[c];
        const float top = p(y0, x0) * (1.f - ax) + p(y0, x0 + 1) * ax;
        const float bot = p(y0 + 1, x0) * (1.f - ax) + p(y0 + 1, x0 + 1) * ax;
        r.image.planes[c](y, x) = top * (1.f - ay) + bot * ay;
      }
    }
  }
  return r;
}

double non_overlap_rate(const Homography& h, int w, int height) {
  if (w < 2 || height < 2) throw TooSmall("frame must be at least 2x2");
  const Homography hinv = invert(h);
  const Eigen::Matrix3d& m = hinv.matrix();
  std::int64_t outside = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = m(2, 0) * x + m(2, 1) * y + m(2, 2);
      if (std::abs(d) <= 1e-12) {
        ++outside;
        continue;
      }
      const double sx = (m(0, 0) * x + m(0, 1) * y + m(0, 2)) / d;
      const double sy = (m(1, 0) * x + m(1, 1) * y + m(1, 2)) / d;
      // 1e-9 px slack keeps exact boundary points (identity!) inside despite
      // ulp noise from the canonicalize/invert round trip.
      constexpr double eps = 1e-9;
      if (sx < -eps || sx > w - 1.0 + eps || sy < -eps || sy > height - 1.0 + eps)
        ++outside;
    }
  }
  return static_cast<double>(outside) / (static_cast<double>(w) * height);
}

namespace {

inline int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

Eigen::ArrayXXf binomial3(const Eigen::ArrayXXf& in) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  Eigen::ArrayXXf tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      tmp(y, x) = 0.25f * in(y, reflect101(x - 1, w)) + 0.5f * in(y, x) +
                  0.25f * in(y, reflect101(x + 1, w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(y, x) = 0.25f * tmp(reflect101(y - 1, h), x) + 0.5f * tmp(y, x) +
                  0.25f * tmp(reflect101(y + 1, h), x);
  return out;
}

Eigen::ArrayXXf mean_pool2(const Eigen::ArrayXXf& in) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Eigen::ArrayXXf out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      float sum = 0.f;
      int n = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int yy = 2 * y + dy, xx = 2 * x + dx;
          if (yy < h && xx < w) {
            sum += in(yy, xx);
            ++n;
          }
        }
      out(y, x) = sum / static_cast<float>(n);
    }
  }
  return out;
}

}  // namespace

std::vector<Image> pyramid(const Image& img, int levels) {
  if (levels < 1) throw ValidationError("pyramid needs at least one level");
  std::vector<Image> out;
  out.push_back(img);
  for (int k = 1; k < levels; ++k) {
    const Image& prev = out.back();
    const int nw = (prev.width + 1) / 2, nh = (prev.height + 1) / 2;
    if (nw < 8 || nh < 8)
      throw TooSmall("pyramid level would drop below 8x8");
    Image next(nw, nh, prev.channels());
    for (int c = 0; c < prev.channels(); ++c)
      next.planes[c] = mean_pool2(binomial3(prev.planes[c]));
    out.push_back(std::move(next));
  }
  return out;
}

Image resize(const Image& img, int w, int h) {
  if (w == img.width && h == img.height) return img;
  const Homography s = scaling_homography(img.width, img.height, w, h);
  return warp(img, s, nullptr, w, h).image;
}

}  // namespace homoscale
