#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "homoscale/homography.hpp"
#include "homoscale/image.hpp"

namespace homoscale {

/// Configuration for progressive-chain construction.
struct ChainConfig {
  int n = 2;                      // inserted intermediate images
  int crop_w = 320;
  int crop_h = 480;
  int resize_w = 256;             // fixed lower resolution W'
  int resize_h = 256;             // H'
  double max_intermediate_rate = 0.2;
  double min_perturbation = 4.0;  // px; forces non-identity samples
  double max_perturbation = 32.0; // px; intermediate corner offsets
  double target_min_rate = 0.2;   // synthetic-target non-overlap window
  double target_max_rate = 0.5;
  double target_max_perturbation = 170.0;  // px; calibrated for the window
  std::uint64_t seed = 0x5ca1ab1e;

  void validate() const;
};

/// Source image, n generated intermediates with their ground-truth
/// homographies, and the target. In synthetic-target mode the source-target
/// homography is recorded as well.
struct ProgressiveChain {
  std::vector<Image> images;          // I_s0, I_s1, ..., I_sn, I_t
  std::vector<ValidityMask> masks;    // aligned with images
  std::vector<Homography> gt_hops;    // H_gt^{1..n}
  std::optional<Homography> h_st;     // synthetic-target mode only

  int n() const { return static_cast<int>(gt_hops.size()); }
  const Image& source() const { return images.front(); }
  const Image& target() const { return images.back(); }

  /// Cumulative products P_i = H_gt^{i+1} * ... * H_gt^{1} for i in [0, n).
  std::vector<Homography> cumulative_gt() const;
};

/// Samples a non-identity homography by uniform 4-corner perturbation,
/// re-drawing while the largest corner offset stays below the minimum
/// perturbation and rejecting samples whose non-overlap rate exceeds
/// max_rate (and, when given, rate_ceiling). Deterministic per rng state.
Homography sample_homography(const ChainConfig& cfg, std::mt19937_64& rng,
                             double max_rate, double rate_ceiling = 1.0);

/// Convenience overload using the config's intermediate limit.
inline Homography sample_homography(const ChainConfig& cfg,
                                    std::mt19937_64& rng) {
  return sample_homography(cfg, rng, cfg.max_intermediate_rate);
}

/// Builds a progressive chain from a source image (and optional real
/// target). Crops near the center with up to 10% jitter, then generates the
/// intermediates by successive sampled homographies. Without a target the
/// chain samples H_st with non-overlap in the configured window and warps
/// the source to create one.
ProgressiveChain build_chain(const Image& source, const Image* target,
                             const ChainConfig& cfg, std::uint64_t pair_index = 0);

/// Seeded multi-octave value-noise texture in [0.05, 0.95].
Image make_texture(int w, int h, std::uint64_t seed, int channels = 1);

/// Grid of correspondences induced by h, keeping only points whose image
/// stays inside the (w, h) frame. Used for synthetic evaluation labels.
Correspondences grid_correspondences(const Homography& h, int w, int h_px,
                                     int nx = 6, int ny = 5);

}  // namespace homoscale
