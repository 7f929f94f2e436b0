#pragma once

#include <optional>
#include <span>
#include <vector>

#include "homoscale/flow.hpp"
#include "homoscale/homography.hpp"
#include "homoscale/image.hpp"

namespace homoscale {

/// Charbonnier penalty sqrt(x^2 + eps^2) - eps; exact L1 when eps == 0.
inline double charbonnier(double x, double eps) {
  if (eps == 0.0) return std::abs(x);
  return std::sqrt(x * x + eps * eps) - eps;
}

inline double charbonnier_deriv(double x, double eps) {
  if (eps == 0.0) return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
  return x / std::sqrt(x * x + eps * eps);
}

/// Which rewrite of the unsupervised identity objective the trainer uses:
/// the matrix form subtracts canonical matrices; the flow form subtracts
/// dense flows and cumulative ground-truth flow sums.
enum class UnsupForm { matrix, flow };

struct LossConfig {
  std::vector<double> lambdas;   // empty selects lambda_i = 10^-i
  bool lambda_w_auto = true;     // lambda_w = L_unsup / L_sup per batch
  double lambda_w_fixed = 1.0;
  double epsilon = 1e-3;         // Charbonnier smoothing; 0 = exact L1
  UnsupForm unsup_form = UnsupForm::matrix;

  double lambda(int i) const {
    if (!lambdas.empty())
      return i < static_cast<int>(lambdas.size()) ? lambdas[i] : 0.0;
    return std::pow(10.0, -i);
  }
};

struct LossReport {
  double l_sup = 0.0;
  double l_unsup = 0.0;
  double lambda_w = 0.0;
  double l_hil = 0.0;            // always l_unsup + lambda_w * l_sup
  double anchor = 0.0;           // reprojection data term, reported separately
  std::vector<double> sup_terms;
  std::vector<double> unsup_terms;
};

/// Flow at a full resolution paired with its fixed-resolution counterpart.
struct FlowPair {
  HomographyFlow full;
  HomographyFlow resized;
};

/// Supervised flow objective: sum_i mean|F_i - F_gt_i| + sum_i
/// mean|F^_i - F^_gt_i| with per-pixel mean and per-component sum.
double sup_loss_flow(std::span<const FlowPair> est, std::span<const FlowPair> gt,
                     const LossConfig& cfg);

/// Unsupervised flow objective: sum_i lambda_i (mean|F_st - F_{s_{i+1}t} -
/// G_i| + resized analog) with G_i the cumulative ground-truth flow sums.
double unsup_loss_flow(const FlowPair& f_st, std::span<const FlowPair> bridges,
                       std::span<const FlowPair> gt_cumulative,
                       const LossConfig& cfg);

/// Unsupervised matrix objective: sum_i lambda_i |canon(H_{s_{i+1}t}^{-1}
/// H_st) - canon(prod_{j<=i} H_gt^{j+1})|_1. Both sides are canonically
/// normalized before subtraction because homographies are scale classes.
double unsup_loss_matrix(const Homography& h_st,
                         std::span<const Homography> bridges,
                         std::span<const Homography> gts,
                         const LossConfig& cfg);

/// Combines the two objectives; in auto mode lambda_w = L_unsup /
/// max(L_sup, 1e-8) and is treated as a constant under differentiation.
LossReport hil(double l_sup, double l_unsup, const LossConfig& cfg);

enum class PhotometricMode { plain, ablation_masked };

/// Mean L1 between warp(src, h) and tgt over the warp validity mask; the
/// ablation variant restricts to pixels valid under both the forward mask
/// and the mask of tgt warped by invert(h).
double photometric_loss(const Image& src, const Image& tgt, const Homography& h,
                        PhotometricMode mode);

/// Per-pair 4-corner offset parameters for the direct trainer: n hop pairs
/// (s_i, s_{i+1}), n bridge pairs (s_{i+1}, t), and the direct pair (s, t).
struct PairwiseParams {
  std::vector<Eigen::Matrix<double, 8, 1>> hops;
  std::vector<Eigen::Matrix<double, 8, 1>> bridges;
  Eigen::Matrix<double, 8, 1> direct = Eigen::Matrix<double, 8, 1>::Zero();

  int pair_count() const { return static_cast<int>(hops.size() + bridges.size()) + 1; }
  Eigen::VectorXd pack() const;
  static PairwiseParams unpack(const Eigen::VectorXd& v, int n);
};

/// Everything the HIL evaluator needs about one chain: ground-truth hops,
/// the pair frame, the fixed resize resolution, loss-grid strides, and the
/// optional anchor matches with weight mu.
struct ChainContext {
  double frame_w = 0, frame_h = 0;
  int resized_w = 256, resized_h = 256;
  int stride = 1;                    // loss-grid subsampling, both branches
  std::vector<Homography> gt_hops;
  Correspondences anchors;           // on the (s,t) frame
  double mu = 0.0;

  // Derived caches; call prepare() after filling the fields above.
  std::array<Eigen::Vector2d, 4> corners;
  std::vector<Eigen::Vector2d> grid_full, grid_resized;
  Eigen::Matrix3d scale = Eigen::Matrix3d::Identity();      // full -> resized
  Eigen::Matrix3d scale_inv = Eigen::Matrix3d::Identity();
  std::vector<Eigen::ArrayX2d> gt_flow_full, gt_flow_resized;    // per hop
  std::vector<Eigen::ArrayX2d> cum_flow_full, cum_flow_resized;  // per term
  std::vector<Eigen::Matrix3d> cum_canon;                        // canon(P_i)
  std::vector<Homography> cum_products;                          // P_i

  int n() const { return static_cast<int>(gt_hops.size()); }
  void prepare();
};

struct HilEvaluation {
  LossReport report;
  double total = 0.0;            // l_hil + mu * anchor
  Eigen::VectorXd gradient;      // filled when requested
  std::vector<Homography> hops, bridges;
  Homography direct;
};

/// Evaluates the semi-supervised homography identity loss (and optionally
/// its analytic gradient) at the given per-pair corner offsets via the
/// chain: corner offsets -> DLT homography -> flow/matrix residuals -> loss.
HilEvaluation evaluate_hil(const PairwiseParams& params, const ChainContext& ctx,
                           const LossConfig& cfg, bool with_gradient);

/// Analytic gradient of L_HIL (plus the mu-weighted anchor term) with
/// respect to every pair's 8 corner-offset parameters.
Eigen::VectorXd loss_gradient(const PairwiseParams& params,
                              const ChainContext& ctx, const LossConfig& cfg);

/// Cumulative-multiplication consistency residual (exact L1 between the
/// canonical forms of H_{s_n t}^{-1} H_st and the ground-truth product).
double consistency_residual(const Homography& h_st, const Homography& bridge_n,
                            std::span<const Homography> gt_hops);

/// Corner-offset parameters reproducing the given pair homographies.
PairwiseParams params_from_homographies(std::span<const Homography> hops,
                                        std::span<const Homography> bridges,
                                        const Homography& direct,
                                        const std::array<Eigen::Vector2d, 4>& corners);

}  // namespace homoscale
