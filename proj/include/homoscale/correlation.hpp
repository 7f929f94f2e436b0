#pragma once

#include <Eigen/Dense>

#include "homoscale/homography.hpp"
#include "homoscale/image.hpp"

namespace homoscale {

/// Per-cell descriptor map. Descriptors are columns of `desc` (depth x
/// width*height, position index y*width + x), L2-normalized; an all-zero
/// descriptor is replaced by the first basis vector.
struct FeatureMap {
  int width = 0;   // cells
  int height = 0;  // cells
  int cell = 0;    // cell edge in source pixels
  Eigen::MatrixXf desc;

  int depth() const { return static_cast<int>(desc.rows()); }
  int positions() const { return static_cast<int>(desc.cols()); }
};

/// Center of feature cell i in the pixel frame of the featured image.
inline double cell_center(int i, int cell) { return (i + 0.5) * cell - 0.5; }

/// Feature-similarity volume. Global maps hold all pairs (channel = target
/// position ty*tgt_w+tx); local maps hold displacements within radius R
/// (channel = (dy+R)*(2R+1) + (dx+R)), with out-of-range targets at -1.
struct CorrelationMap {
  enum class Kind { global, local };
  Kind kind = Kind::global;
  int query_w = 0, query_h = 0;
  int tgt_w = 0, tgt_h = 0;
  int radius = 0;              // local only
  int src_cell = 0, tgt_cell = 0;
  Eigen::MatrixXf values;      // channels x (query_w*query_h)

  int channels() const { return static_cast<int>(values.rows()); }
};

/// Hand-crafted cell descriptor: mean intensity, intensity standard
/// deviation, and an 8-bin gradient-orientation histogram (d = 10).
/// The image is reduced to grayscale and edge-padded to a cell multiple.
FeatureMap extract_features(const Image& img, int cell);

/// C(x_s, x_t) = <f_s(x_s), f_t(x_t)> over all position pairs.
CorrelationMap global_correlation(const FeatureMap& src, const FeatureMap& tgt);

/// Displacement-limited correlation: channel (dy+R)*(2R+1)+(dx+R) holds
/// <f_s(x), f_t(x+(dx,dy))>.
CorrelationMap local_correlation(const FeatureMap& src, const FeatureMap& tgt,
                                 int radius);

/// Best-channel matches passing the best/second-best similarity ratio test
/// (for global maps the second best is taken outside a 1-cell neighborhood
/// of the best). Ties break toward the smallest channel index. Emitted in
/// cell-center pixel coordinates; throws NoMatches if fewer than 4 survive.
Correspondences matches_from_correlation(const CorrelationMap& c, double ratio);

}  // namespace homoscale
