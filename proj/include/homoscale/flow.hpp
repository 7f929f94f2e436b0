#pragma once

#include <Eigen/Dense>

#include "homoscale/errors.hpp"
#include "homoscale/homography.hpp"

namespace homoscale {

/// Pixel-center meshgrid: coordinate (x, y) lives at integer pixel centers.
struct MeshGrid {
  int width = 0;
  int height = 0;

  MeshGrid(int w, int h) : width(w), height(h) {
    if (w < 2 || h < 2) throw TooSmall("meshgrid must be at least 2x2");
  }
};

/// Dense per-pixel displacement field F = X_t - X_s over a meshgrid.
/// Arrays are indexed (y, x).
struct HomographyFlow {
  int width = 0;
  int height = 0;
  Eigen::ArrayXXd u;  // x displacement, height x width
  Eigen::ArrayXXd v;  // y displacement

  HomographyFlow() = default;
  HomographyFlow(int w, int h)
      : width(w), height(h), u(Eigen::ArrayXXd::Zero(h, w)),
        v(Eigen::ArrayXXd::Zero(h, w)) {
    if (w < 2 || h < 2) throw TooSmall("flow must be at least 2x2");
  }
};

/// Pure axis scaling between resolutions, mapping the (w_in, h_in) frame onto
/// (w_out, h_out): x' = x * w_out / w_in.
inline Homography scaling_homography(double w_in, double h_in, double w_out,
                                     double h_out) {
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  s(0, 0) = w_out / w_in;
  s(1, 1) = h_out / h_in;
  return Homography::from_matrix(s);
}

/// Conjugates h (acting on the (w_in, h_in) frame) into the (w_out, h_out)
/// frame: S h S^{-1}.
inline Homography conjugate_by_scaling(const Homography& h, double w_in,
                                       double h_in, double w_out,
                                       double h_out) {
  const Homography s = scaling_homography(w_in, h_in, w_out, h_out);
  return compose(s, compose(h, invert(s)));
}

/// Flow induced by h over g: flow(x, y) = apply(h, (x, y)) - (x, y).
/// Throws GridDegenerate when the projective denominator underflows anywhere
/// on the grid (the horizon crosses the grid).
inline HomographyFlow flow_from_homography(const Homography& h,
                                           const MeshGrid& g) {
  HomographyFlow f(g.width, g.height);
  const Eigen::Matrix3d& m = h.matrix();
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const double w = m(2, 0) * x + m(2, 1) * y + m(2, 2);
      if (std::abs(w) <= 1e-9)
        throw GridDegenerate("homography horizon crosses the grid");
      f.u(y, x) = (m(0, 0) * x + m(0, 1) * y + m(0, 2)) / w - x;
      f.v(y, x) = (m(1, 0) * x + m(1, 1) * y + m(1, 2)) / w - y;
    }
  }
  return f;
}

/// Least-squares DLT over all grid correspondences (x, y) -> (x+u, y+v).
inline Homography homography_from_flow(const HomographyFlow& f,
                                       const MeshGrid& g) {
  if (f.width != g.width || f.height != g.height)
    throw ShapeMismatch("flow and grid dimensions differ");
  if (!f.u.allFinite() || !f.v.allFinite())
    throw ValidationError("flow must be finite");
  Correspondences c;
  c.reserve(static_cast<std::size_t>(g.width) * g.height);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      c.push_back({{double(x), double(y)},
                   {x + f.u(y, x), y + f.v(y, x)}});
  return dlt_solve(c);
}

/// Resamples f onto a new grid: convert to a homography, conjugate by the
/// diagonal scaling between the resolutions, re-evaluate. Displacements scale
/// by the per-axis resolution ratios.
inline HomographyFlow rescale_flow(const HomographyFlow& f, int new_w,
                                   int new_h) {
  const MeshGrid src(f.width, f.height);
  const MeshGrid dst(new_w, new_h);
  const Homography h = homography_from_flow(f, src);
  const Homography scaled =
      conjugate_by_scaling(h, f.width, f.height, new_w, new_h);
  return flow_from_homography(scaled, dst);
}

}  // namespace homoscale
