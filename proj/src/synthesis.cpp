#include "homoscale/synthesis.hpp"

#include <algorithm>
#include <cmath>

#include "homoscale/rng.hpp"
#include "homoscale/warp.hpp"

namespace homoscale {

void ChainConfig::validate() const {
  if (n < 0) throw ValidationError("chain config: n must be >= 0");
  if (crop_w < 2 || crop_h < 2) throw ValidationError("chain config: crop too small");
  if (resize_w < 2 || resize_h < 2)
    throw ValidationError("chain config: resize dims too small");
  if (!(max_intermediate_rate > 0.0 && max_intermediate_rate < 1.0))
    throw ValidationError("chain config: max intermediate rate must be in (0,1)");
  if (!(min_perturbation > 0.0))
    throw ValidationError("chain config: min perturbation must be positive");
  if (max_perturbation < min_perturbation)
    throw ValidationError("chain config: max perturbation below minimum");
  if (!(target_min_rate >= 0.0 && target_max_rate <= 1.0 &&
        target_min_rate < target_max_rate))
    throw ValidationError("chain config: bad target rate window");
}

std::vector<Homography> ProgressiveChain::cumulative_gt() const {
  std::vector<Homography> cum;
  cum.reserve(gt_hops.size());
  Homography p = Homography::identity();
  for (const auto& h : gt_hops) {
    p = compose(h, p);
    cum.push_back(p);
  }
  return cum;
}

namespace {

constexpr int kMaxRejections = 1000;

Homography draw_corner_perturbation(const ChainConfig& cfg,
                                    std::mt19937_64& rng, double max_pert) {
  const auto corners = frame_corners(cfg.crop_w, cfg.crop_h);
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    Eigen::Matrix<double, 8, 1> offsets;
    for (int i = 0; i < 8; ++i) offsets(i) = uniform(rng, -max_pert, max_pert);
    if (offsets.cwiseAbs().maxCoeff() < cfg.min_perturbation) continue;
    try {
      return homography_from_corner_offsets(corners, offsets);
    } catch (const DegenerateConfiguration&) {
      continue;  // folded quadrilateral; re-draw
    }
  }
  throw SamplingExhausted("corner perturbation never reached the minimum");
}

}  // namespace

Homography sample_homography(const ChainConfig& cfg, std::mt19937_64& rng,
                             double max_rate, double rate_ceiling) {
  cfg.validate();
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const Homography h = draw_corner_perturbation(cfg, rng, cfg.max_perturbation);
    const double rate = non_overlap_rate(h, cfg.crop_w, cfg.crop_h);
    if (rate <= max_rate && rate < rate_ceiling) return h;
  }
  throw SamplingExhausted("non-overlap rejection budget exhausted");
}

namespace {

Homography sample_target_homography(const ChainConfig& cfg,
                                    std::mt19937_64& rng) {
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const Homography h =
        draw_corner_perturbation(cfg, rng, cfg.target_max_perturbation);
    const double rate = non_overlap_rate(h, cfg.crop_w, cfg.crop_h);
    if (rate >= cfg.target_min_rate && rate <= cfg.target_max_rate) return h;
  }
  throw SamplingExhausted("target non-overlap window never hit");
}

Image crop(const Image& img, int x0, int y0, int w, int h) {
  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    out.planes[c] = img.planes[c].block(y0, x0, h, w);
  return out;
}

}  // namespace

ProgressiveChain build_chain(const Image& source, const Image* target,
                             const ChainConfig& cfg, std::uint64_t pair_index) {
  cfg.validate();
  if (source.width < cfg.crop_w || source.height < cfg.crop_h)
    throw TooSmall("source smaller than the requested crop");
  if (target && (target->width != source.width || target->height != source.height))
    throw ShapeMismatch("source and target dimensions differ");

  // Independent streams so draw order never couples the chain parts.
  auto rng_crop = derive_rng(cfg.seed, pair_index, 0);
  auto rng_target = derive_rng(cfg.seed, pair_index, 1);

  const int slack_x = source.width - cfg.crop_w;
  const int slack_y = source.height - cfg.crop_h;
  const double jx = 0.1 * cfg.crop_w, jy = 0.1 * cfg.crop_h;
  int x0 = slack_x / 2, y0 = slack_y / 2;
  x0 = std::clamp(x0 + static_cast<int>(std::lround(uniform(rng_crop, -jx, jx))),
                  0, slack_x);
  y0 = std::clamp(y0 + static_cast<int>(std::lround(uniform(rng_crop, -jy, jy))),
                  0, slack_y);

  ProgressiveChain chain;
  chain.images.push_back(crop(source, x0, y0, cfg.crop_w, cfg.crop_h));
  chain.masks.emplace_back(cfg.crop_w, cfg.crop_h, true);

  std::optional<double> st_rate;
  Image target_image;
  ValidityMask target_mask(cfg.crop_w, cfg.crop_h, true);
  if (target) {
    target_image = crop(*target, x0, y0, cfg.crop_w, cfg.crop_h);
  } else {
    const Homography h_st = sample_target_homography(cfg, rng_target);
    st_rate = non_overlap_rate(h_st, cfg.crop_w, cfg.crop_h);
    auto warped = warp(chain.images.front(), h_st, &chain.masks.front());
    target_image = std::move(warped.image);
    target_mask = std::move(warped.mask);
    chain.h_st = h_st;
  }

  for (int i = 0; i < cfg.n; ++i) {
    auto rng_hop = derive_rng(cfg.seed, pair_index, 2 + static_cast<std::uint64_t>(i));
    const double ceiling = st_rate ? *st_rate : 1.0;
    const Homography h =
        sample_homography(cfg, rng_hop, cfg.max_intermediate_rate, ceiling);
    auto warped = warp(chain.images.back(), h, &chain.masks.back());
    chain.images.push_back(std::move(warped.image));
    chain.masks.push_back(std::move(warped.mask));
    chain.gt_hops.push_back(h);
  }

  chain.images.push_back(std::move(target_image));
  chain.masks.push_back(std::move(target_mask));
  return chain;
}

namespace {

float value_noise(int w, int h, int gx, int gy, int x, int y,
                  std::uint64_t seed) {
  // Bilinear interpolation over a seeded lattice of size (gx+1) x (gy+1).
  const double fx = static_cast<double>(x) * gx / w;
  const double fy = static_cast<double>(y) * gy / h;
  const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
  const double ax = fx - ix, ay = fy - iy;
  auto lattice = [&](int lx, int ly) {
    const std::uint64_t v =
        mix64(seed ^ mix64((static_cast<std::uint64_t>(lx) << 32) |
                           static_cast<std::uint32_t>(ly)));
    return static_cast<double>(v >> 11) * 0x1.0p-53;
  };
  const double top = lattice(ix, iy) * (1 - ax) + lattice(ix + 1, iy) * ax;
  const double bot = lattice(ix, iy + 1) * (1 - ax) + lattice(ix + 1, iy + 1) * ax;
  return static_cast<float>(top * (1 - ay) + bot * ay);
}

}  // namespace

Image make_texture(int w, int h, std::uint64_t seed, int channels) {
  Image img(w, h, channels);
  for (int c = 0; c < channels; ++c) {
    const std::uint64_t cs = mix64(seed + 0x9e37 * static_cast<std::uint64_t>(c + 1));
    Eigen::ArrayXXf acc = Eigen::ArrayXXf::Zero(h, w);
    double weight = 1.0, total = 0.0;
    // Four octaves of value noise, coarse to fine.
    for (int octave = 0; octave < 4; ++octave) {
      const int gx = 4 << octave, gy = 4 << octave;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          acc(y, x) += static_cast<float>(weight) *
                       value_noise(w, h, gx, gy, x, y, mix64(cs + octave));
      total += weight;
      weight *= 0.55;
    }
    img.planes[c] = 0.05f + 0.9f * (acc / static_cast<float>(total));
  }
  return img;
}

Correspondences grid_correspondences(const Homography& h, int w, int h_px,
                                     int nx, int ny) {
  Correspondences c;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Eigen::Vector2d p(
          (i + 0.5) * (w - 1.0) / nx, (j + 0.5) * (h_px - 1.0) / ny);
      try {
        const Eigen::Vector2d q = apply(h, p);
        if (q.x() >= 0 && q.x() <= w - 1.0 && q.y() >= 0 && q.y() <= h_px - 1.0)
          c.push_back({p, q});
      } catch (const DegeneratePoint&) {
      }
    }
  return c;
}

}  // namespace homoscale
