#include "homoscale/estimator.hpp"

#include <cmath>

#include "homoscale/warp.hpp"

namespace homoscale {

void EstimatorConfig::validate() const {
  if (levels < 2) throw ValidationError("estimator needs at least 2 levels");
  if (static_cast<int>(cells.size()) != levels)
    throw ValidationError("one cell size per level required");
  for (int c : cells)
    if (c < 1) throw ValidationError("cell sizes must be positive");
  if (radius < 1) throw ValidationError("radius must be >= 1");
  if (!(ratio > 0 && ratio <= 1) || !(local_ratio > 0 && local_ratio <= 1))
    throw ValidationError("ratio thresholds must lie in (0, 1]");
  if (irls_iterations < 1) throw ValidationError("IRLS needs >= 1 iteration");
  if (resize_w < 32 || resize_h < 32)
    throw ValidationError("resize resolution too small");
}

RobustDltResult robust_dlt(const Correspondences& c, int iterations,
                           double huber_width) {
  if (c.size() < 4)
    throw NoMatches("robust DLT needs at least 4 correspondences");
  std::vector<double> weights(c.size(), 1.0);
  Homography h = dlt_solve(c, weights);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double r = (apply(h, c[j].src) - c[j].tgt).norm();
      weights[j] = r <= huber_width ? 1.0 : huber_width / r;
    }
    h = dlt_solve(c, weights);
  }
  int inliers = 0;
  for (const auto& m : c)
    if ((apply(h, m.src) - m.tgt).norm() <= huber_width) ++inliers;
  return {h, static_cast<double>(inliers) / static_cast<double>(c.size())};
}

namespace {

struct MaskedImage {
  Image image;
  ValidityMask mask;
};

MaskedImage resize_with_mask(const Image& img, const ValidityMask* mask,
                             int w, int h) {
  if (img.width == w && img.height == h) {
    return {img, mask ? *mask : ValidityMask(w, h, true)};
  }
  const Homography s = scaling_homography(img.width, img.height, w, h);
  WarpResult r = warp(img, s, mask, w, h);
  return {std::move(r.image), std::move(r.mask)};
}

/// Cell validity: every covered pixel valid and the cell fully inside.
MaskArray cell_validity(const ValidityMask& m, int cell, int gw, int gh) {
  MaskArray valid = MaskArray::Constant(gh, gw, false);
  for (int cy = 0; cy < gh; ++cy)
    for (int cx = 0; cx < gw; ++cx) {
      if ((cx + 1) * cell > m.width || (cy + 1) * cell > m.height) continue;
      bool ok = true;
      for (int y = cy * cell; ok && y < (cy + 1) * cell; ++y)
        for (int x = cx * cell; x < (cx + 1) * cell; ++x)
          if (!m.valid(y, x)) {
            ok = false;
            break;
          }
      valid(cy, cx) = ok;
    }
  return valid;
}

inline int cell_index(double px, int cell) {
  return static_cast<int>(std::lround((px + 0.5) / cell - 0.5));
}

/// Column argmax of a global correlation map: best query per target.
std::vector<int> best_query_per_target(const CorrelationMap& c) {
  std::vector<int> best(c.channels(), -1);
  std::vector<float> val(c.channels(), -2.f);
  for (int q = 0; q < c.query_w * c.query_h; ++q)
    for (int t = 0; t < c.channels(); ++t)
      if (c.values(t, q) > val[t]) {
        val[t] = c.values(t, q);
        best[t] = q;
      }
  return best;
}

inline double parabola_offset(float lo, float mid, float hi) {
  const double denom = static_cast<double>(lo) - 2.0 * mid + hi;
  if (denom >= -1e-12) return 0.0;  // not a strict peak
  const double d = 0.5 * (static_cast<double>(lo) - hi) / denom;
  return std::clamp(d, -0.5, 0.5);
}

/// Parabolic sub-cell refinement of the target coordinate of each match.
void refine_subpixel(const CorrelationMap& c, Correspondences& matches) {
  for (auto& m : matches) {
    const int qx = cell_index(m.src.x(), c.src_cell);
    const int qy = cell_index(m.src.y(), c.src_cell);
    const int q = qy * c.query_w + qx;
    double dx = 0.0, dy = 0.0;
    if (c.kind == CorrelationMap::Kind::global) {
      const int tx = cell_index(m.tgt.x(), c.tgt_cell);
      const int ty = cell_index(m.tgt.y(), c.tgt_cell);
      if (tx > 0 && tx < c.tgt_w - 1) {
        dx = parabola_offset(c.values(ty * c.tgt_w + tx - 1, q),
                             c.values(ty * c.tgt_w + tx, q),
                             c.values(ty * c.tgt_w + tx + 1, q));
      }
      if (ty > 0 && ty < c.tgt_h - 1) {
        dy = parabola_offset(c.values((ty - 1) * c.tgt_w + tx, q),
                             c.values(ty * c.tgt_w + tx, q),
                             c.values((ty + 1) * c.tgt_w + tx, q));
      }
    } else {
      const int side = 2 * c.radius + 1;
      const int ddx = cell_index(m.tgt.x(), c.tgt_cell) - qx + c.radius;
      const int ddy = cell_index(m.tgt.y(), c.tgt_cell) - qy + c.radius;
      const int ch = ddy * side + ddx;
      if (ddx > 0 && ddx < side - 1)
        dx = parabola_offset(c.values(ch - 1, q), c.values(ch, q),
                             c.values(ch + 1, q));
      if (ddy > 0 && ddy < side - 1)
        dy = parabola_offset(c.values(ch - side, q), c.values(ch, q),
                             c.values(ch + side, q));
    }
    m.tgt.x() += dx * c.tgt_cell;
    m.tgt.y() += dy * c.tgt_cell;
  }
}

/// Drops matches whose source or target cell touches invalid pixels; for
/// global maps optionally keeps only mutually-best pairs.
Correspondences filter_matches(const CorrelationMap& c, Correspondences matches,
                               const MaskArray& src_cells,
                               const MaskArray& tgt_cells, bool mutual) {
  std::vector<int> mutual_best;
  if (mutual && c.kind == CorrelationMap::Kind::global)
    mutual_best = best_query_per_target(c);

  Correspondences kept;
  for (const auto& m : matches) {
    const int qx = cell_index(m.src.x(), c.src_cell);
    const int qy = cell_index(m.src.y(), c.src_cell);
    const int tx = cell_index(m.tgt.x(), c.tgt_cell);
    const int ty = cell_index(m.tgt.y(), c.tgt_cell);
    if (qx < 0 || qx >= c.query_w || qy < 0 || qy >= c.query_h) continue;
    if (tx < 0 || tx >= c.tgt_w || ty < 0 || ty >= c.tgt_h) continue;
    if (!src_cells(qy, qx) || !tgt_cells(ty, tx)) continue;
    if (!mutual_best.empty() &&
        mutual_best[ty * c.tgt_w + tx] != qy * c.query_w + qx)
      continue;
    kept.push_back(m);
  }
  return kept;
}

}  // namespace

EstimateResult estimate(const Image& src, const Image& tgt,
                        const EstimatorConfig& cfg,
                        const ValidityMask* src_mask,
                        const ValidityMask* tgt_mask) {
  cfg.validate();
  if (src.width != tgt.width || src.height != tgt.height)
    throw ShapeMismatch("estimate() needs equal image dimensions");
  if (src.width < 32 || src.height < 32)
    throw TooSmall("estimate() needs at least 32x32 input");

  const Image src_gray = to_gray(src);
  const Image tgt_gray = to_gray(tgt);
  const MaskedImage rs =
      resize_with_mask(src_gray, src_mask, cfg.resize_w, cfg.resize_h);
  const MaskedImage rt =
      resize_with_mask(tgt_gray, tgt_mask, cfg.resize_w, cfg.resize_h);

  const Homography to_resized = scaling_homography(
      src.width, src.height, cfg.resize_w, cfg.resize_h);
  const auto to_original = [&](const Homography& h) {
    return compose(invert(to_resized), compose(h, to_resized));
  };
  const auto point_to_original = [&](const Eigen::Vector2d& p) {
    return apply(invert(to_resized), p);
  };

  EstimateResult result;
  Homography current = Homography::identity();
  bool have_estimate = false;

  for (int level = 0; level < cfg.levels; ++level) {
    const int cell = cfg.cells[level];
    LevelDiagnostics diag;
    diag.level = level;
    diag.cell = cell;

    MaskedImage warped;
    const MaskedImage* source = &rs;
    if (have_estimate) {
      WarpResult w = warp(rs.image, current, &rs.mask);
      warped = {std::move(w.image), std::move(w.mask)};
      source = &warped;
    }

    const FeatureMap fs = extract_features(source->image, cell);
    const FeatureMap ft = extract_features(rt.image, cell);
    const MaskArray src_cells =
        cell_validity(source->mask, cell, fs.width, fs.height);
    const MaskArray tgt_cells = cell_validity(rt.mask, cell, ft.width, ft.height);

    CorrelationMap corr;
    Correspondences matches;
    try {
      if (!have_estimate) {
        corr = global_correlation(fs, ft);
        matches = matches_from_correlation(corr, cfg.ratio);
      } else {
        corr = local_correlation(fs, ft, cfg.radius);
        matches = matches_from_correlation(corr, cfg.local_ratio);
      }
    } catch (const NoMatches&) {
      if (!have_estimate) throw;  // the coarsest level is fatal
      diag.skipped = true;
      diag.estimate = to_original(current);
      result.diagnostics.levels.push_back(diag);
      continue;
    }
    diag.matches_raw = static_cast<int>(matches.size());

    matches = filter_matches(corr, std::move(matches), src_cells, tgt_cells,
                             cfg.mutual_check);
    if (cfg.subpixel) refine_subpixel(corr, matches);
    diag.matches_used = static_cast<int>(matches.size());

    if (matches.size() < 4) {
      if (!have_estimate)
        throw NoMatches("insufficient coarse-level correspondences");
      diag.skipped = true;
      diag.estimate = to_original(current);
      result.diagnostics.levels.push_back(diag);
      continue;
    }

    const RobustDltResult fit =
        robust_dlt(matches, cfg.irls_iterations, cfg.huber_width * cell);
    diag.irls_inlier_ratio = fit.inlier_ratio;

    Correspondences original_matches;
    if (!have_estimate) {
      current = fit.h;
      have_estimate = true;
      original_matches = matches;
    } else {
      // Residual matches relate the pre-warped source to the target.
      const Homography pre = current;
      current = compose(fit.h, current);
      const Homography pre_inv = invert(pre);
      original_matches = matches;
      for (auto& m : original_matches) m.src = apply(pre_inv, m.src);
    }
    for (auto& m : original_matches) {
      m.src = point_to_original(m.src);
      m.tgt = point_to_original(m.tgt);
    }
    result.diagnostics.matches = std::move(original_matches);

    diag.estimate = to_original(current);
    result.diagnostics.levels.push_back(diag);
  }

  if (!have_estimate) throw NoMatches("no level produced an estimate");
  result.h = to_original(current);
  return result;
}

ProgressiveResult progressive_estimate(const ProgressiveChain& chain,
                                       const EstimatorConfig& cfg,
                                       const ProgressiveOptions& opts) {
  const int n = chain.n();
  if (static_cast<int>(chain.images.size()) != n + 2)
    throw ShapeMismatch("chain image count does not match its hop count");

  ProgressiveResult result;
  Homography product = Homography::identity();
  for (int i = 0; i < n; ++i) {
    if (opts.ground_truth_hops) {
      result.hops.push_back(chain.gt_hops[i]);
    } else {
      EstimateResult e = estimate(chain.images[i], chain.images[i + 1], cfg,
                                  &chain.masks[i], &chain.masks[i + 1]);
      result.hops.push_back(e.h);
      result.hop_diagnostics.push_back(std::move(e.diagnostics));
    }
    product = compose(result.hops.back(), product);
  }

  if (opts.ground_truth_bridge) {
    if (!chain.h_st)
      throw ValidationError("ground-truth bridge needs a synthetic-target chain");
    Homography cum = Homography::identity();
    for (const auto& h : chain.gt_hops) cum = compose(h, cum);
    result.bridge = compose(*chain.h_st, invert(cum));
  } else {
    EstimateResult e =
        estimate(chain.images[n], chain.images.back(), cfg,
                 &chain.masks[n], &chain.masks.back());
    result.bridge = e.h;
    result.bridge_diagnostics = std::move(e.diagnostics);
  }

  result.h_st = compose(result.bridge, product);
  return result;
}

OptimizeResult direct_optimize(const ProgressiveChain& chain,
                               const PairwiseParams& init,
                               const OptimizerConfig& ocfg,
                               const LossConfig& lcfg,
                               const Correspondences* anchors) {
  if (chain.n() < 1)
    throw ValidationError("direct optimization needs recorded intermediate "
                          "ground truths (n >= 1)");
  if (ocfg.iterations < 1 || !(ocfg.step > 0))
    throw ValidationError("bad optimizer configuration");

  ChainContext ctx;
  ctx.frame_w = chain.source().width;
  ctx.frame_h = chain.source().height;
  ctx.resized_w = ocfg.resize_w;
  ctx.resized_h = ocfg.resize_h;
  ctx.stride = ocfg.stride;
  ctx.gt_hops = chain.gt_hops;
  ctx.mu = ocfg.mu;
  if (ocfg.mu > 0.0) {
    if (anchors) {
      ctx.anchors = *anchors;
    } else {
      EstimatorConfig ecfg;
      ctx.anchors = estimate(chain.source(), chain.target(), ecfg,
                             &chain.masks.front(), &chain.masks.back())
                        .diagnostics.matches;
    }
    if (ctx.anchors.empty())
      throw NoMatches("anchored optimization has no anchor matches");
  }
  ctx.prepare();

  const int n = chain.n();
  Eigen::VectorXd theta = init.pack();
  if (theta.size() != 8 * (2 * n + 1))
    throw ShapeMismatch("initial parameters do not match the chain");

  const auto residual_of = [&](const HilEvaluation& e) {
    return consistency_residual(e.direct, e.bridges.back(), ctx.gt_hops);
  };

  HilEvaluation eval =
      evaluate_hil(PairwiseParams::unpack(theta, n), ctx, lcfg, true);
  double residual = residual_of(eval);
  const double initial_total = eval.total;

  OptimizeResult result;
  result.trace.push_back(eval.report);

  double step = ocfg.step;
  constexpr double kMinStep = 1e-14;
  constexpr double kGrowth = 2.0;

  int it = 0;
  for (; it < ocfg.iterations; ++it) {
    // lambda_w frozen for this iteration's line search.
    LossConfig frozen = lcfg;
    frozen.lambda_w_auto = false;
    frozen.lambda_w_fixed = eval.report.lambda_w;
    const double frozen_total =
        eval.report.l_unsup + eval.report.lambda_w * eval.report.l_sup +
        ctx.mu * eval.report.anchor;

    bool accepted = false;
    Eigen::VectorXd candidate;
    HilEvaluation cand_eval;
    double cand_residual = 0.0;
    while (step >= kMinStep) {
      candidate = theta - step * eval.gradient;
      bool feasible = true;
      try {
        cand_eval =
            evaluate_hil(PairwiseParams::unpack(candidate, n), ctx, frozen, true);
        cand_residual = residual_of(cand_eval);
      } catch (const Error&) {
        feasible = false;  // left the valid region; shrink the step
      }
      if (feasible && cand_eval.total <= frozen_total &&
          (ctx.mu > 0.0 || cand_residual <= residual)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent at the smallest step

    const double move = (candidate - theta).cwiseAbs().maxCoeff();
    theta = candidate;
    // Re-balance lambda_w at the accepted point for reporting and the next
    // iteration's gradient.
    eval = evaluate_hil(PairwiseParams::unpack(theta, n), ctx, lcfg, true);
    residual = residual_of(eval);
    result.trace.push_back(eval.report);
    step = std::min(step * kGrowth, 1e6);

    if (eval.total > 10.0 * std::max(initial_total, 1e-12))
      throw Diverged("loss exceeded ten times its initial value");
    if (move < ocfg.tolerance) break;
  }

  result.iterations_run = it;
  result.hops = eval.hops;
  result.bridges = eval.bridges;
  result.direct = eval.direct;
  result.consistency = residual;
  return result;
}

}  // namespace homoscale
