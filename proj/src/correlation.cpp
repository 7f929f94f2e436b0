#include "homoscale/correlation.hpp"

#include <cmath>
#include <numbers>

#include "homoscale/errors.hpp"

namespace homoscale {

namespace {

// Relative weights of the descriptor blocks before L2 normalization. The
// orientation histogram carries most of the discrimination; mean and spread
// anchor coarse appearance.
constexpr float kMeanWeight = 0.5f;
constexpr float kStdWeight = 0.5f;
constexpr int kBins = 8;
constexpr int kDepth = 2 + kBins;

inline int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace

FeatureMap extract_features(const Image& img, int cell) {
  if (cell < 1) throw ValidationError("cell size must be positive");
  const Image gray = to_gray(img);
  const int gw = (gray.width + cell - 1) / cell;
  const int gh = (gray.height + cell - 1) / cell;
  if (gw < 2 || gh < 2) throw TooSmall("feature grid smaller than 2x2");

  // Edge-padded copy so every cell is fully populated.
  const int pw = gw * cell, ph = gh * cell;
  Eigen::ArrayXXf pad(ph, pw);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x)
      pad(y, x) = gray.planes[0](std::min(y, gray.height - 1),
                                 std::min(x, gray.width - 1));

  // Central-difference gradients with mirrored borders.
  Eigen::ArrayXXf gx(ph, pw), gy(ph, pw);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x) {
      gx(y, x) = 0.5f * (pad(y, reflect101(x + 1, pw)) -
                         pad(y, reflect101(x - 1, pw)));
      gy(y, x) = 0.5f * (pad(reflect101(y + 1, ph), x) -
                         pad(reflect101(y - 1, ph), x));
    }

  FeatureMap fm;
  fm.width = gw;
  fm.height = gh;
  fm.cell = cell;
  fm.desc.resize(kDepth, gw * gh);

  const float inv_n = 1.f / static_cast<float>(cell * cell);
  for (int cy = 0; cy < gh; ++cy) {
    for (int cx = 0; cx < gw; ++cx) {
      double sum = 0.0, sum2 = 0.0;
      double hist[kBins] = {};
      for (int y = cy * cell; y < (cy + 1) * cell; ++y)
        for (int x = cx * cell; x < (cx + 1) * cell; ++x) {
          const float v = pad(y, x);
          sum += v;
          sum2 += static_cast<double>(v) * v;
          const float dx = gx(y, x), dy = gy(y, x);
          const float mag = std::sqrt(dx * dx + dy * dy);
          if (mag > 1e-7f) {
            const double theta = std::atan2(dy, dx);  // [-pi, pi]
            int bin = static_cast<int>((theta + std::numbers::pi) /
                                       (2 * std::numbers::pi) * kBins);
            bin = std::clamp(bin, 0, kBins - 1);
            hist[bin] += mag;
          }
        }
      const double mean = sum * inv_n;
      const double var = std::max(0.0, sum2 * inv_n - mean * mean);
      double hist_total = 0.0;
      for (double h : hist) hist_total += h;

      Eigen::Matrix<float, kDepth, 1> d;
      d(0) = kMeanWeight * static_cast<float>(mean);
      d(1) = kStdWeight * static_cast<float>(std::sqrt(var));
      for (int b = 0; b < kBins; ++b)
        d(2 + b) = hist_total > 0
                       ? static_cast<float>(hist[b] / hist_total)
                       : 0.f;
      const float norm = d.norm();
      if (norm > 1e-12f) {
        d /= norm;
      } else {
        d.setZero();
        d(0) = 1.f;
      }
      fm.desc.col(cy * gw + cx) = d;
    }
  }
  return fm;
}

namespace {

// Fixed ascending-k accumulation in double so the result is reproducible and
// comparable with a naive oracle.
inline float dot(const Eigen::MatrixXf& a, int ca, const Eigen::MatrixXf& b,
                 int cb) {
  double acc = 0.0;
  for (int k = 0; k < a.rows(); ++k)
    acc += static_cast<double>(a(k, ca)) * static_cast<double>(b(k, cb));
  return static_cast<float>(acc);
}

}  // namespace

CorrelationMap global_correlation(const FeatureMap& src, const FeatureMap& tgt) {
  if (src.depth() != tgt.depth())
    throw DepthMismatch("feature depths differ");
  CorrelationMap c;
  c.kind = CorrelationMap::Kind::global;
  c.query_w = src.width;
  c.query_h = src.height;
  c.tgt_w = tgt.width;
  c.tgt_h = tgt.height;
  c.src_cell = src.cell;
  c.tgt_cell = tgt.cell;
  c.values.resize(tgt.width * tgt.height, src.width * src.height);
  for (int q = 0; q < src.positions(); ++q)
    for (int t = 0; t < tgt.positions(); ++t)
      c.values(t, q) = dot(src.desc, q, tgt.desc, t);
  return c;
}

CorrelationMap local_correlation(const FeatureMap& src, const FeatureMap& tgt,
                                 int radius) {
  if (src.depth() != tgt.depth())
    throw DepthMismatch("feature depths differ");
  if (src.width != tgt.width || src.height != tgt.height)
    throw ShapeMismatch("local correlation needs equal feature dims");
  if (radius < 1) throw ValidationError("radius must be >= 1");

  const int side = 2 * radius + 1;
  CorrelationMap c;
  c.kind = CorrelationMap::Kind::local;
  c.query_w = src.width;
  c.query_h = src.height;
  c.tgt_w = tgt.width;
  c.tgt_h = tgt.height;
  c.radius = radius;
  c.src_cell = src.cell;
  c.tgt_cell = tgt.cell;
  c.values.setConstant(side * side, src.positions(), -1.f);

  for (int qy = 0; qy < src.height; ++qy)
    for (int qx = 0; qx < src.width; ++qx) {
      const int q = qy * src.width + qx;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int ty = qy + dy;
        if (ty < 0 || ty >= tgt.height) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int tx = qx + dx;
          if (tx < 0 || tx >= tgt.width) continue;
          c.values((dy + radius) * side + (dx + radius), q) =
              dot(src.desc, q, tgt.desc, ty * tgt.width + tx);
        }
      }
    }
  return c;
}

namespace {

struct BestPair {
  int best_channel = -1;
  float best = -2.f;
  float second = -2.f;
};

BestPair scan_channels(const CorrelationMap& c, int q) {
  BestPair bp;
  for (int ch = 0; ch < c.channels(); ++ch) {
    const float v = c.values(ch, q);
    if (v > bp.best) {
      bp.best = v;
      bp.best_channel = ch;
    }
  }
  if (bp.best_channel < 0) return bp;
  if (c.kind == CorrelationMap::Kind::global) {
    // Second best outside a 1-cell neighborhood of the best target position.
    const int bx = bp.best_channel % c.tgt_w;
    const int by = bp.best_channel / c.tgt_w;
    for (int ch = 0; ch < c.channels(); ++ch) {
      const int tx = ch % c.tgt_w, ty = ch / c.tgt_w;
      if (std::abs(tx - bx) <= 1 && std::abs(ty - by) <= 1) continue;
      bp.second = std::max(bp.second, c.values(ch, q));
    }
  } else {
    for (int ch = 0; ch < c.channels(); ++ch) {
      if (ch == bp.best_channel) continue;
      bp.second = std::max(bp.second, c.values(ch, q));
    }
  }
  return bp;
}

}  // namespace

Correspondences matches_from_correlation(const CorrelationMap& c, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw ValidationError("ratio must lie in (0, 1]");
  Correspondences out;
  for (int qy = 0; qy < c.query_h; ++qy)
    for (int qx = 0; qx < c.query_w; ++qx) {
      const int q = qy * c.query_w + qx;
      const BestPair bp = scan_channels(c, q);
      if (bp.best_channel < 0 || bp.best <= 0.f) continue;
      if (!(bp.second < ratio * bp.best)) continue;

      Eigen::Vector2d tgt;
      if (c.kind == CorrelationMap::Kind::global) {
        tgt = {cell_center(bp.best_channel % c.tgt_w, c.tgt_cell),
               cell_center(bp.best_channel / c.tgt_w, c.tgt_cell)};
      } else {
        const int side = 2 * c.radius + 1;
        const int dx = bp.best_channel % side - c.radius;
        const int dy = bp.best_channel / side - c.radius;
        tgt = {cell_center(qx + dx, c.tgt_cell),
               cell_center(qy + dy, c.tgt_cell)};
      }
      out.push_back(
          {{cell_center(qx, c.src_cell), cell_center(qy, c.src_cell)}, tgt});
    }
  if (out.size() < 4)
    throw NoMatches("fewer than 4 ratio-tested matches survive");
  return out;
}

}  // namespace homoscale
