#pragma once

#include <utility>
#include <vector>

#include "homoscale/homography.hpp"
#include "homoscale/image.hpp"

namespace homoscale {

struct WarpResult {
  Image image;
  ValidityMask mask;
};

/// Inverse bilinear warp: output pixel p samples img at apply(invert(h), p).
/// A pixel is valid iff all four interpolation neighbors are in bounds (and
/// valid under src_mask when given); invalid pixels are set to 0.
/// Output dimensions default to the input's.
WarpResult warp(const Image& img, const Homography& h,
                const ValidityMask* src_mask = nullptr, int out_w = 0,
                int out_h = 0);

/// Fraction of target-grid pixels whose preimage under invert(h) falls
/// outside the source frame [0, w-1] x [0, h-1] (pure in/out rule at pixel
/// centers). Depends only on h and the dimensions, never on image content.
double non_overlap_rate(const Homography& h, int w, int height);

/// Downsampling pyramid: level 0 is the input; level k+1 halves level k
/// (ceil) via 2x2 mean pooling after 3x3 binomial smoothing with mirrored
/// (reflect-101) borders. Throws TooSmall if a level would drop below 8x8.
std::vector<Image> pyramid(const Image& img, int levels);

/// Bilinear resize to (w, h), implemented as a warp by the axis scaling map.
Image resize(const Image& img, int w, int h);

}  // namespace homoscale
