#include "homoscale/objective.hpp"

#include <cmath>

#include "homoscale/warp.hpp"

namespace homoscale {

namespace {

void check_same_dims(const HomographyFlow& a, const HomographyFlow& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeMismatch("flow dimensions differ");
}

/// mean over pixels of rho(du) + rho(dv) between two flows.
double flow_l1(const HomographyFlow& a, const HomographyFlow& b, double eps) {
  check_same_dims(a, b);
  double acc = 0.0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      acc += charbonnier(a.u(y, x) - b.u(y, x), eps) +
             charbonnier(a.v(y, x) - b.v(y, x), eps);
  return acc / (static_cast<double>(a.width) * a.height);
}

/// mean over pixels of rho(st - bridge - cum) summed over components.
double flow_residual_l1(const HomographyFlow& st, const HomographyFlow& bridge,
                        const HomographyFlow& cum, double eps) {
  check_same_dims(st, bridge);
  check_same_dims(st, cum);
  double acc = 0.0;
  for (int y = 0; y < st.height; ++y)
    for (int x = 0; x < st.width; ++x)
      acc += charbonnier(st.u(y, x) - bridge.u(y, x) - cum.u(y, x), eps) +
             charbonnier(st.v(y, x) - bridge.v(y, x) - cum.v(y, x), eps);
  return acc / (static_cast<double>(st.width) * st.height);
}

}  // namespace

double sup_loss_flow(std::span<const FlowPair> est, std::span<const FlowPair> gt,
                     const LossConfig& cfg) {
  if (est.size() != gt.size())
    throw ShapeMismatch("supervised term counts differ");
  double full = 0.0, resized = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    full += flow_l1(est[i].full, gt[i].full, cfg.epsilon);
    resized += flow_l1(est[i].resized, gt[i].resized, cfg.epsilon);
  }
  return full + resized;
}

double unsup_loss_flow(const FlowPair& f_st, std::span<const FlowPair> bridges,
                       std::span<const FlowPair> gt_cumulative,
                       const LossConfig& cfg) {
  if (bridges.empty()) throw ShapeMismatch("unsupervised loss needs n >= 1");
  if (bridges.size() != gt_cumulative.size())
    throw ShapeMismatch("bridge and cumulative term counts differ");
  double total = 0.0;
  for (std::size_t i = 0; i < bridges.size(); ++i) {
    const double term =
        flow_residual_l1(f_st.full, bridges[i].full, gt_cumulative[i].full,
                         cfg.epsilon) +
        flow_residual_l1(f_st.resized, bridges[i].resized,
                         gt_cumulative[i].resized, cfg.epsilon);
    total += cfg.lambda(static_cast<int>(i)) * term;
  }
  return total;
}

double unsup_loss_matrix(const Homography& h_st,
                         std::span<const Homography> bridges,
                         std::span<const Homography> gts,
                         const LossConfig& cfg) {
  if (bridges.empty() || bridges.size() != gts.size())
    throw ShapeMismatch("matrix loss needs matching bridge/gt counts");
  double total = 0.0;
  Homography cum = Homography::identity();
  for (std::size_t i = 0; i < bridges.size(); ++i) {
    cum = compose(gts[i], cum);
    const Homography lhs = compose(invert(bridges[i]), h_st);
    const Eigen::Matrix3d d = lhs.matrix() - cum.matrix();
    double term = 0.0;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) term += charbonnier(d(r, c), cfg.epsilon);
    total += cfg.lambda(static_cast<int>(i)) * term;
  }
  return total;
}

LossReport hil(double l_sup, double l_unsup, const LossConfig& cfg) {
  if (l_sup < 0 || l_unsup < 0)
    throw ValidationError("losses must be nonnegative");
  LossReport r;
  r.l_sup = l_sup;
  r.l_unsup = l_unsup;
  r.lambda_w =
      cfg.lambda_w_auto ? l_unsup / std::max(l_sup, 1e-8) : cfg.lambda_w_fixed;
  r.l_hil = l_unsup + r.lambda_w * l_sup;
  return r;
}

double photometric_loss(const Image& src, const Image& tgt, const Homography& h,
                        PhotometricMode mode) {
  if (src.width != tgt.width || src.height != tgt.height ||
      src.channels() != tgt.channels())
    throw ShapeMismatch("photometric loss needs equal image shapes");

  const WarpResult fwd = warp(src, h);
  MaskArray valid = fwd.mask.valid;
  if (mode == PhotometricMode::ablation_masked) {
    const WarpResult rev = warp(tgt, invert(h));
    valid = valid && rev.mask.valid;
  }

  double acc = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      if (!valid(y, x)) continue;
      for (int c = 0; c < src.channels(); ++c)
        acc += std::abs(static_cast<double>(fwd.image.planes[c](y, x)) -
                        tgt.planes[c](y, x));
      count += src.channels();
    }
  if (count == 0) throw EmptyMask("no valid pixels for the photometric loss");
  return acc / static_cast<double>(count);
}

Eigen::VectorXd PairwiseParams::pack() const {
  Eigen::VectorXd v(8 * pair_count());
  int at = 0;
  for (const auto& h : hops) v.segment<8>(8 * at++) = h;
  for (const auto& b : bridges) v.segment<8>(8 * at++) = b;
  v.segment<8>(8 * at) = direct;
  return v;
}

PairwiseParams PairwiseParams::unpack(const Eigen::VectorXd& v, int n) {
  if (v.size() != 8 * (2 * n + 1))
    throw ShapeMismatch("parameter vector length mismatch");
  PairwiseParams p;
  int at = 0;
  for (int i = 0; i < n; ++i) p.hops.push_back(v.segment<8>(8 * at++));
  for (int i = 0; i < n; ++i) p.bridges.push_back(v.segment<8>(8 * at++));
  p.direct = v.segment<8>(8 * at);
  return p;
}

namespace {

std::vector<Eigen::Vector2d> strided_grid(double w, double h, int stride) {
  std::vector<Eigen::Vector2d> pts;
  for (int y = 0; y < static_cast<int>(h); y += stride)
    for (int x = 0; x < static_cast<int>(w); x += stride)
      pts.emplace_back(x, y);
  if (pts.size() < 4) throw TooSmall("loss grid needs at least 4 points");
  return pts;
}

Eigen::ArrayX2d flow_values(const Eigen::Matrix3d& m,
                            const std::vector<Eigen::Vector2d>& pts) {
  Eigen::ArrayX2d out(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = pts[i].x(), y = pts[i].y();
    const double w = m(2, 0) * x + m(2, 1) * y + m(2, 2);
    if (std::abs(w) <= 1e-9)
      throw GridDegenerate("homography horizon crosses the loss grid");
    out(static_cast<Eigen::Index>(i), 0) =
        (m(0, 0) * x + m(0, 1) * y + m(0, 2)) / w - x;
    out(static_cast<Eigen::Index>(i), 1) =
        (m(1, 0) * x + m(1, 1) * y + m(1, 2)) / w - y;
  }
  return out;
}

}  // namespace

void ChainContext::prepare() {
  if (frame_w < 2 || frame_h < 2 || resized_w < 2 || resized_h < 2)
    throw TooSmall("chain context frames must be at least 2x2");
  if (stride < 1) throw ValidationError("stride must be >= 1");

  corners = frame_corners(frame_w, frame_h);
  grid_full = strided_grid(frame_w, frame_h, stride);
  grid_resized = strided_grid(resized_w, resized_h, stride);

  scale = Eigen::Matrix3d::Identity();
  scale(0, 0) = resized_w / frame_w;
  scale(1, 1) = resized_h / frame_h;
  scale_inv = scale.inverse();

  gt_flow_full.clear();
  gt_flow_resized.clear();
  cum_flow_full.clear();
  cum_flow_resized.clear();
  cum_canon.clear();
  cum_products.clear();

  Homography cum = Homography::identity();
  Eigen::ArrayX2d sum_full =
      Eigen::ArrayX2d::Zero(static_cast<Eigen::Index>(grid_full.size()), 2);
  Eigen::ArrayX2d sum_resized =
      Eigen::ArrayX2d::Zero(static_cast<Eigen::Index>(grid_resized.size()), 2);
  for (const auto& hop : gt_hops) {
    const Eigen::Matrix3d m = hop.matrix();
    const Eigen::Matrix3d m_hat = scale * m * scale_inv;
    gt_flow_full.push_back(flow_values(m, grid_full));
    gt_flow_resized.push_back(flow_values(m_hat, grid_resized));
    sum_full += gt_flow_full.back();
    sum_resized += gt_flow_resized.back();
    cum_flow_full.push_back(sum_full);
    cum_flow_resized.push_back(sum_resized);
    cum = compose(hop, cum);
    cum_products.push_back(cum);
    cum_canon.push_back(cum.matrix());
  }
}

namespace {

/// d(apply(h, p)) / d(h entries), weighted by (gx, gy) and accumulated.
inline void accum_point_jacobian(const Eigen::Matrix3d& h, double x, double y,
                                 double gx, double gy, Eigen::Matrix3d& grad) {
  const double w = h(2, 0) * x + h(2, 1) * y + h(2, 2);
  const double invw = 1.0 / w;
  const double X = (h(0, 0) * x + h(0, 1) * y + h(0, 2)) * invw;
  const double Y = (h(1, 0) * x + h(1, 1) * y + h(1, 2)) * invw;
  grad(0, 0) += gx * x * invw;
  grad(0, 1) += gx * y * invw;
  grad(0, 2) += gx * invw;
  grad(1, 0) += gy * x * invw;
  grad(1, 1) += gy * y * invw;
  grad(1, 2) += gy * invw;
  const double common = -(gx * X + gy * Y) * invw;
  grad(2, 0) += common * x;
  grad(2, 1) += common * y;
  grad(2, 2) += common;
}

struct PairSlot {
  Eigen::Matrix3d h;                 // h33 = 1 gauge
  Eigen::Matrix<double, 8, 8> jac;   // d(h entries 0..7)/d(offsets)
  Eigen::Matrix3d grad_sup = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d grad_unsup = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d grad_anchor = Eigen::Matrix3d::Zero();
};

PairSlot make_slot(const std::array<Eigen::Vector2d, 4>& corners,
                   const Eigen::Matrix<double, 8, 1>& offsets, bool with_grad) {
  PairSlot s;
  const Homography h = homography_from_corner_offsets(
      corners, offsets, with_grad ? &s.jac : nullptr);
  s.h = h.matrix_h33();
  return s;
}

/// One resolution of a flow residual term: mean rho over the grid of
/// flow(pos) [- flow(neg)] - reference, with gradients into the slots.
double flow_term(const Eigen::Matrix3d& pos_h, Eigen::Matrix3d* pos_grad,
                 const Eigen::Matrix3d* neg_h, Eigen::Matrix3d* neg_grad,
                 const Eigen::ArrayX2d& reference,
                 const std::vector<Eigen::Vector2d>& pts, double eps,
                 double weight) {
  const double inv_n = 1.0 / static_cast<double>(pts.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = pts[i].x(), y = pts[i].y();
    const double wp = pos_h(2, 0) * x + pos_h(2, 1) * y + pos_h(2, 2);
    if (std::abs(wp) <= 1e-9)
      throw GridDegenerate("homography horizon crosses the loss grid");
    double ru = (pos_h(0, 0) * x + pos_h(0, 1) * y + pos_h(0, 2)) / wp - x;
    double rv = (pos_h(1, 0) * x + pos_h(1, 1) * y + pos_h(1, 2)) / wp - y;
    if (neg_h) {
      const double wn = (*neg_h)(2, 0) * x + (*neg_h)(2, 1) * y + (*neg_h)(2, 2);
      if (std::abs(wn) <= 1e-9)
        throw GridDegenerate("homography horizon crosses the loss grid");
      ru -= ((*neg_h)(0, 0) * x + (*neg_h)(0, 1) * y + (*neg_h)(0, 2)) / wn - x;
      rv -= ((*neg_h)(1, 0) * x + (*neg_h)(1, 1) * y + (*neg_h)(1, 2)) / wn - y;
    }
    const Eigen::Index ii = static_cast<Eigen::Index>(i);
    ru -= reference(ii, 0);
    rv -= reference(ii, 1);
    acc += charbonnier(ru, eps) + charbonnier(rv, eps);
    if (pos_grad) {
      const double gu = weight * charbonnier_deriv(ru, eps) * inv_n;
      const double gv = weight * charbonnier_deriv(rv, eps) * inv_n;
      accum_point_jacobian(pos_h, x, y, gu, gv, *pos_grad);
      if (neg_h && neg_grad)
        accum_point_jacobian(*neg_h, x, y, -gu, -gv, *neg_grad);
    }
  }
  return acc * inv_n;
}

/// Backward pass through canonical normalization: given G = dL/dC with
/// C = s * M / |M|_F, returns dL/dM. The sign s is locally constant.
Eigen::Matrix3d canon_backward(const Eigen::Matrix3d& m,
                               const Eigen::Matrix3d& c,
                               const Eigen::Matrix3d& g) {
  const double f = m.norm();
  const double s = (c.cwiseProduct(m).sum() > 0) ? 1.0 : -1.0;
  const double gc = g.cwiseProduct(c).sum();
  return (s / f) * (g - gc * c);
}

}  // namespace

HilEvaluation evaluate_hil(const PairwiseParams& params, const ChainContext& ctx,
                           const LossConfig& cfg, bool with_gradient) {
  const int n = ctx.n();
  if (static_cast<int>(params.hops.size()) != n ||
      static_cast<int>(params.bridges.size()) != n)
    throw ShapeMismatch("parameter pair count does not match the chain");
  if (n < 1) throw ShapeMismatch("the identity loss needs n >= 1");

  std::vector<PairSlot> hops, bridges;
  for (const auto& p : params.hops)
    hops.push_back(make_slot(ctx.corners, p, with_gradient));
  for (const auto& p : params.bridges)
    bridges.push_back(make_slot(ctx.corners, p, with_gradient));
  PairSlot direct = make_slot(ctx.corners, params.direct, with_gradient);

  const auto conj = [&](const Eigen::Matrix3d& h) -> Eigen::Matrix3d {
    return ctx.scale * h * ctx.scale_inv;
  };
  // <G, S dH S^-1> = <S^T G S^-T, dH>: maps resized-branch gradients back
  // onto the full-resolution entries.
  const auto conj_back = [&](const Eigen::Matrix3d& g) -> Eigen::Matrix3d {
    return ctx.scale.transpose() * g * ctx.scale_inv.transpose();
  };

  LossReport report;

  // Supervised flow objective over the hop pairs.
  for (int i = 0; i < n; ++i) {
    Eigen::Matrix3d g_full = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d g_hat = Eigen::Matrix3d::Zero();
    const double full = flow_term(
        hops[i].h, with_gradient ? &g_full : nullptr, nullptr, nullptr,
        ctx.gt_flow_full[i], ctx.grid_full, cfg.epsilon, 1.0);
    const Eigen::Matrix3d h_hat = conj(hops[i].h);
    const double hat = flow_term(
        h_hat, with_gradient ? &g_hat : nullptr, nullptr, nullptr,
        ctx.gt_flow_resized[i], ctx.grid_resized, cfg.epsilon, 1.0);
    report.sup_terms.push_back(full + hat);
    report.l_sup += full + hat;
    if (with_gradient) hops[i].grad_sup = g_full + conj_back(g_hat);
  }

  // Unsupervised identity objective.
  if (cfg.unsup_form == UnsupForm::flow) {
    const Eigen::Matrix3d st_hat = conj(direct.h);
    for (int i = 0; i < n; ++i) {
      const double li = cfg.lambda(i);
      Eigen::Matrix3d g_st = Eigen::Matrix3d::Zero();
      Eigen::Matrix3d g_b = Eigen::Matrix3d::Zero();
      Eigen::Matrix3d g_st_hat = Eigen::Matrix3d::Zero();
      Eigen::Matrix3d g_b_hat = Eigen::Matrix3d::Zero();
      const double full = flow_term(
          direct.h, with_gradient ? &g_st : nullptr, &bridges[i].h,
          with_gradient ? &g_b : nullptr, ctx.cum_flow_full[i], ctx.grid_full,
          cfg.epsilon, li);
      const Eigen::Matrix3d b_hat = conj(bridges[i].h);
      const double hat = flow_term(
          st_hat, with_gradient ? &g_st_hat : nullptr, &b_hat,
          with_gradient ? &g_b_hat : nullptr, ctx.cum_flow_resized[i],
          ctx.grid_resized, cfg.epsilon, li);
      report.unsup_terms.push_back(li * (full + hat));
      report.l_unsup += li * (full + hat);
      if (with_gradient) {
        direct.grad_unsup += g_st + conj_back(g_st_hat);
        bridges[i].grad_unsup += g_b + conj_back(g_b_hat);
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const double li = cfg.lambda(i);
      const Eigen::Matrix3d binv = bridges[i].h.inverse();
      const Eigen::Matrix3d m = binv * direct.h;
      const Eigen::Matrix3d c = detail::canonicalize(m);
      const Eigen::Matrix3d d = c - ctx.cum_canon[i];
      double term = 0.0;
      Eigen::Matrix3d g_c = Eigen::Matrix3d::Zero();
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) {
          term += charbonnier(d(r, col), cfg.epsilon);
          g_c(r, col) = li * charbonnier_deriv(d(r, col), cfg.epsilon);
        }
      report.unsup_terms.push_back(li * term);
      report.l_unsup += li * term;
      if (with_gradient) {
        const Eigen::Matrix3d g_m = canon_backward(m, c, g_c);
        direct.grad_unsup += binv.transpose() * g_m;
        bridges[i].grad_unsup -= binv.transpose() * g_m * m.transpose();
      }
    }
  }

  // Anchor reprojection data term on the direct pair.
  if (ctx.mu > 0.0 && !ctx.anchors.empty()) {
    const double inv_n = 1.0 / static_cast<double>(ctx.anchors.size());
    for (const auto& a : ctx.anchors) {
      const double x = a.src.x(), y = a.src.y();
      const double w = direct.h(2, 0) * x + direct.h(2, 1) * y + direct.h(2, 2);
      if (std::abs(w) <= 1e-9)
        throw GridDegenerate("anchor point degenerate under the estimate");
      const double rx =
          (direct.h(0, 0) * x + direct.h(0, 1) * y + direct.h(0, 2)) / w -
          a.tgt.x();
      const double ry =
          (direct.h(1, 0) * x + direct.h(1, 1) * y + direct.h(1, 2)) / w -
          a.tgt.y();
      report.anchor += (charbonnier(rx, cfg.epsilon) +
                        charbonnier(ry, cfg.epsilon)) * inv_n;
      if (with_gradient)
        accum_point_jacobian(direct.h, x, y,
                             charbonnier_deriv(rx, cfg.epsilon) * inv_n,
                             charbonnier_deriv(ry, cfg.epsilon) * inv_n,
                             direct.grad_anchor);
    }
  }

  const LossReport combined = hil(report.l_sup, report.l_unsup, cfg);
  report.lambda_w = combined.lambda_w;
  report.l_hil = combined.l_hil;

  HilEvaluation eval;
  eval.report = report;
  eval.total = report.l_hil + ctx.mu * report.anchor;
  for (const auto& s : hops) eval.hops.push_back(Homography::from_matrix(s.h));
  for (const auto& s : bridges)
    eval.bridges.push_back(Homography::from_matrix(s.h));
  eval.direct = Homography::from_matrix(direct.h);

  if (with_gradient) {
    // lambda_w enters as a stop-gradient constant at its current value.
    eval.gradient.resize(8 * (2 * n + 1));
    const auto theta_grad =
        [&](const PairSlot& s) -> Eigen::Matrix<double, 8, 1> {
      const Eigen::Matrix3d total = s.grad_unsup +
                                    report.lambda_w * s.grad_sup +
                                    ctx.mu * s.grad_anchor;
      Eigen::Matrix<double, 8, 1> v8;
      for (int e = 0; e < 8; ++e) v8(e) = total(e / 3, e % 3);
      return s.jac.transpose() * v8;
    };
    int at = 0;
    for (const auto& s : hops) eval.gradient.segment<8>(8 * at++) = theta_grad(s);
    for (const auto& s : bridges)
      eval.gradient.segment<8>(8 * at++) = theta_grad(s);
    eval.gradient.segment<8>(8 * at) = theta_grad(direct);
  }
  return eval;
}

Eigen::VectorXd loss_gradient(const PairwiseParams& params,
                              const ChainContext& ctx, const LossConfig& cfg) {
  return evaluate_hil(params, ctx, cfg, true).gradient;
}

double consistency_residual(const Homography& h_st, const Homography& bridge_n,
                            std::span<const Homography> gt_hops) {
  Homography cum = Homography::identity();
  for (const auto& h : gt_hops) cum = compose(h, cum);
  const Homography lhs = compose(invert(bridge_n), h_st);
  return (lhs.matrix() - cum.matrix()).cwiseAbs().sum();
}

PairwiseParams params_from_homographies(
    std::span<const Homography> hops, std::span<const Homography> bridges,
    const Homography& direct, const std::array<Eigen::Vector2d, 4>& corners) {
  PairwiseParams p;
  for (const auto& h : hops)
    p.hops.push_back(corner_offsets_from_homography(h, corners));
  for (const auto& h : bridges)
    p.bridges.push_back(corner_offsets_from_homography(h, corners));
  p.direct = corner_offsets_from_homography(direct, corners);
  return p;
}

}  // namespace homoscale
