#pragma once

#include <optional>
#include <vector>

#include "homoscale/correlation.hpp"
#include "homoscale/homography.hpp"
#include "homoscale/objective.hpp"
#include "homoscale/synthesis.hpp"

namespace homoscale {

struct EstimatorConfig {
  int levels = 4;
  std::vector<int> cells = {16, 8, 4, 2};  // per level, on the resized frame
  int radius = 4;                          // local correlation search radius
  double ratio = 0.96;        // global-level best/second-best threshold
  double local_ratio = 0.995; // finer-level threshold (channels are neighbors)
  int irls_iterations = 10;
  double huber_width = 2.0;   // pixels at feature resolution
  int resize_w = 256;
  int resize_h = 256;
  bool mutual_check = true;   // keep only mutually best global matches
  bool subpixel = true;       // parabolic peak refinement

  void validate() const;
};

struct LevelDiagnostics {
  int level = 0;
  int cell = 0;
  int matches_raw = 0;    // ratio-test survivors
  int matches_used = 0;   // after validity and mutual filtering
  double irls_inlier_ratio = 0.0;
  bool skipped = false;
  Homography estimate;    // running estimate after this level, original frame
};

struct EstimateDiagnostics {
  std::vector<LevelDiagnostics> levels;
  Correspondences matches;  // finest usable matches, original frame
};

struct EstimateResult {
  Homography h;
  EstimateDiagnostics diagnostics;
};

struct RobustDltResult {
  Homography h;
  double inlier_ratio = 0.0;
};

/// Iteratively reweighted DLT with Huber weights; deterministic.
RobustDltResult robust_dlt(const Correspondences& c, int iterations,
                           double huber_width);

/// Coarse-to-fine correlation estimation: global correlation and robust DLT
/// at the coarsest level, then per level pre-warp the source by the current
/// estimate, extract residual matches from local correlation, and compose
/// the DLT correction. The result maps src pixels to tgt pixels in the
/// original resolution.
EstimateResult estimate(const Image& src, const Image& tgt,
                        const EstimatorConfig& cfg,
                        const ValidityMask* src_mask = nullptr,
                        const ValidityMask* tgt_mask = nullptr);

struct ProgressiveOptions {
  bool ground_truth_hops = false;    // substitute recorded hop matrices
  bool ground_truth_bridge = false;  // substitute the exact bridge (synthetic)
};

struct ProgressiveResult {
  Homography h_st;
  std::vector<Homography> hops;      // per-hop estimates (or substitutes)
  Homography bridge;
  std::vector<EstimateDiagnostics> hop_diagnostics;
  std::optional<EstimateDiagnostics> bridge_diagnostics;
};

/// Estimates every hop and the bridge, then reconstructs H_st by cumulative
/// multiplication.
ProgressiveResult progressive_estimate(const ProgressiveChain& chain,
                                       const EstimatorConfig& cfg,
                                       const ProgressiveOptions& opts = {});

struct OptimizerConfig {
  int iterations = 2000;
  double step = 1.0;          // initial step; adapted by backtracking
  double mu = 0.0;            // anchor weight
  double tolerance = 1e-10;   // convergence on the parameter change
  int stride = 8;             // loss-grid subsampling
  int resize_w = 256;
  int resize_h = 256;
};

struct OptimizeResult {
  std::vector<Homography> hops, bridges;
  Homography direct;
  std::vector<LossReport> trace;   // accepted iterations
  double consistency = 0.0;        // final cumulative-multiplication residual
  int iterations_run = 0;
};

/// Minimizes the semi-supervised identity loss (plus the mu-weighted anchor
/// reprojection term when anchors are available) over per-pair corner
/// offsets by gradient descent with backtracking step halving. With mu = 0 a
/// step is accepted only if it does not increase the consistency residual.
OptimizeResult direct_optimize(const ProgressiveChain& chain,
                               const PairwiseParams& init,
                               const OptimizerConfig& ocfg,
                               const LossConfig& lcfg,
                               const Correspondences* anchors = nullptr);

}  // namespace homoscale
