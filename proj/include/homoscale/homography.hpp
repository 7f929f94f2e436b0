#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <span>
#include <vector>

#include "homoscale/errors.hpp"

namespace homoscale {

namespace detail {

/// Canonical scale for a projective matrix: unit Frobenius norm, sign chosen
/// so the bottom-right entry is positive when it is not vanishing; otherwise
/// the entry of largest magnitude (first in row-major order on ties) is made
/// positive.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> canonicalize(const Eigen::Matrix<Scalar, 3, 3>& m) {
  const Scalar f = m.norm();
  if (!(f > Scalar(0)) || !m.allFinite())
    throw SingularMatrix("cannot canonicalize a zero or non-finite matrix");
  Eigen::Matrix<Scalar, 3, 3> c = m / f;
  Scalar pivot = c(2, 2);
  if (std::abs(pivot) <= Scalar(1e-9)) {
    Scalar best = Scalar(0);
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col)
        if (std::abs(c(r, col)) > std::abs(best)) best = c(r, col);
    pivot = best;
  }
  if (pivot < Scalar(0)) c = -c;
  return c;
}

}  // namespace detail

/// Invertible 3x3 projective transform in pixel coordinates (x right, y down,
/// origin at the top-left pixel center). Stored in canonical normalization:
/// unit Frobenius norm with the sign rule of detail::canonicalize.
template <typename Scalar>
class HomographyT {
 public:
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;

  static constexpr Scalar kDetEps = Scalar(1e-12);

  HomographyT() : m_(Matrix3::Identity() / std::sqrt(Scalar(3))) {}

  static HomographyT identity() { return HomographyT(); }

  /// Canonicalizes and validates invertibility (|det| of the canonical form
  /// must exceed 1e-12).
  static HomographyT from_matrix(const Matrix3& m) {
    HomographyT h;
    h.m_ = detail::canonicalize(m);
    if (std::abs(h.m_.determinant()) <= kDetEps)
      throw SingularMatrix("matrix is numerically singular");
    return h;
  }

  static HomographyT translation(Scalar tx, Scalar ty) {
    Matrix3 m = Matrix3::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return from_matrix(m);
  }

  /// Canonically normalized matrix.
  const Matrix3& matrix() const { return m_; }

  /// Convenience view scaled to h33 = 1. Errors when the canonical h33 is
  /// too small for the view to be meaningful.
  Matrix3 matrix_h33() const {
    if (std::abs(m_(2, 2)) <= Scalar(1e-9))
      throw DegenerateNormalization("h33 vanishes; no h33=1 view exists");
    return m_ / m_(2, 2);
  }

  Scalar determinant() const { return m_.determinant(); }

  /// Frobenius distance between canonical forms; zero iff projectively equal.
  Scalar distance(const HomographyT& other) const {
    return (m_ - other.m_).norm();
  }

  bool approx_equal(const HomographyT& other, Scalar tol) const {
    return distance(other) <= tol;
  }

 private:
  Matrix3 m_;
};

using Homography = HomographyT<double>;

/// One source->target point pair in pixels.
struct Correspondence {
  Eigen::Vector2d src;
  Eigen::Vector2d tgt;
};

using Correspondences = std::vector<Correspondence>;

/// Applies h to a point with projective division.
/// Throws DegeneratePoint when the denominator underflows.
template <typename Scalar>
typename HomographyT<Scalar>::Vector2 apply(
    const HomographyT<Scalar>& h, const Eigen::Matrix<Scalar, 2, 1>& p) {
  const auto& m = h.matrix();
  const Scalar w = m(2, 0) * p.x() + m(2, 1) * p.y() + m(2, 2);
  if (std::abs(w) <= Scalar(1e-12))
    throw DegeneratePoint("point maps to infinity under this homography");
  return {(m(0, 0) * p.x() + m(0, 1) * p.y() + m(0, 2)) / w,
          (m(1, 0) * p.x() + m(1, 1) * p.y() + m(1, 2)) / w};
}

template <typename Scalar>
std::vector<Eigen::Matrix<Scalar, 2, 1>> apply(
    const HomographyT<Scalar>& h,
    std::span<const Eigen::Matrix<Scalar, 2, 1>> pts) {
  std::vector<Eigen::Matrix<Scalar, 2, 1>> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(apply(h, p));
  return out;
}

template <typename Scalar>
std::vector<Eigen::Matrix<Scalar, 2, 1>> apply(
    const HomographyT<Scalar>& h,
    const std::vector<Eigen::Matrix<Scalar, 2, 1>>& pts) {
  return apply(h, std::span<const Eigen::Matrix<Scalar, 2, 1>>(pts));
}

/// compose(outer, inner) maps p through inner first: apply(compose(A,B), p)
/// equals apply(A, apply(B, p)) up to projective scale.
template <typename Scalar>
HomographyT<Scalar> compose(const HomographyT<Scalar>& outer,
                            const HomographyT<Scalar>& inner) {
  try {
    return HomographyT<Scalar>::from_matrix(outer.matrix() * inner.matrix());
  } catch (const SingularMatrix&) {
    throw SingularMatrix("composition is numerically singular");
  }
}

template <typename Scalar>
HomographyT<Scalar> invert(const HomographyT<Scalar>& h) {
  if (std::abs(h.determinant()) <= HomographyT<Scalar>::kDetEps)
    throw SingularMatrix("homography is not invertible");
  return HomographyT<Scalar>::from_matrix(h.matrix().inverse().eval());
}

namespace detail {

struct HartleyTransform {
  Eigen::Matrix3d t;         // maps raw pixels to the normalized frame
  Eigen::Vector2d centroid;
  double scale = 1.0;
};

inline HartleyTransform hartley_transform(
    const Correspondences& c, bool source_side) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : c) centroid += source_side ? p.src : p.tgt;
  centroid /= static_cast<double>(c.size());
  double mean_dist = 0.0;
  for (const auto& p : c)
    mean_dist += ((source_side ? p.src : p.tgt) - centroid).norm();
  mean_dist /= static_cast<double>(c.size());
  const double s = mean_dist > 0 ? std::sqrt(2.0) / mean_dist : 1.0;
  HartleyTransform h;
  h.centroid = centroid;
  h.scale = s;
  h.t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return h;
}

}  // namespace detail

/// Direct linear transform over >= 4 correspondences with Hartley
/// normalization (centroid to origin, mean distance sqrt(2)). The null-space
/// direction comes from the eigendecomposition of the 9x9 normal matrix; a
/// tie in the smallest eigenvalue signals a degenerate configuration.
/// Optional nonnegative per-correspondence weights enable IRLS reuse.
inline Homography dlt_solve(const Correspondences& c,
                            std::span<const double> weights = {}) {
  if (c.size() < 4)
    throw DegenerateConfiguration("dlt_solve needs at least 4 correspondences");
  if (!weights.empty() && weights.size() != c.size())
    throw ShapeMismatch("weight count does not match correspondence count");
  for (const auto& p : c)
    if (!p.src.allFinite() || !p.tgt.allFinite())
      throw ValidationError("correspondence coordinates must be finite");
  // Pairwise duplicate check only for small sets; dense grids are covered by
  // the eigenvalue tie test below.
  if (c.size() <= 64)
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j)
        if ((c[i].src - c[j].src).norm() <= 1e-12)
          throw DegenerateConfiguration("duplicate source points");

  const auto ts = detail::hartley_transform(c, true);
  const auto tt = detail::hartley_transform(c, false);

  Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
  Eigen::Matrix<double, 9, 1> row;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w <= 0.0) continue;
    const Eigen::Vector2d s = ts.scale * (c[i].src - ts.centroid);
    const Eigen::Vector2d t = tt.scale * (c[i].tgt - tt.centroid);
    row << s.x(), s.y(), 1, 0, 0, 0, -t.x() * s.x(), -t.x() * s.y(), -t.x();
    ata.selfadjointView<Eigen::Lower>().rankUpdate(row, w);
    row << 0, 0, 0, s.x(), s.y(), 1, -t.y() * s.x(), -t.y() * s.y(), -t.y();
    ata.selfadjointView<Eigen::Lower>().rankUpdate(row, w);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig;
  eig.compute(ata);
  if (eig.info() != Eigen::Success)
    throw DegenerateConfiguration("normal-matrix eigendecomposition failed");
  const auto& evals = eig.eigenvalues();  // ascending
  const double lead = std::max(evals(8), 1e-300);
  if (evals(1) <= 1e-10 * lead)
    throw DegenerateConfiguration(
        "design matrix is rank-deficient beyond the expected null space");

  const Eigen::Matrix<double, 9, 1> h = eig.eigenvectors().col(0);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d raw = tt.t.inverse() * hn * ts.t;
  try {
    return Homography::from_matrix(raw);
  } catch (const SingularMatrix&) {
    throw DegenerateConfiguration("recovered homography is singular");
  }
}

/// Frame corners at pixel centers: (0,0), (w-1,0), (w-1,h-1), (0,h-1).
inline std::array<Eigen::Vector2d, 4> frame_corners(double w, double h) {
  return {Eigen::Vector2d(0, 0), Eigen::Vector2d(w - 1, 0),
          Eigen::Vector2d(w - 1, h - 1), Eigen::Vector2d(0, h - 1)};
}

/// Exact 4-point solve in the h33 = 1 gauge, used by the corner-offset
/// parameterization. `offsets` packs (dx0,dy0,...,dx3,dy3).
/// The optional Jacobian receives d(h row-major, first 8 entries)/d(offsets).
inline Homography homography_from_corner_offsets(
    const std::array<Eigen::Vector2d, 4>& corners,
    const Eigen::Matrix<double, 8, 1>& offsets,
    Eigen::Matrix<double, 8, 8>* jacobian = nullptr) {
  Eigen::Matrix<double, 8, 8> m;
  Eigen::Matrix<double, 8, 1> rhs;
  for (int k = 0; k < 4; ++k) {
    const double x = corners[k].x(), y = corners[k].y();
    const double xp = x + offsets(2 * k), yp = y + offsets(2 * k + 1);
    m.row(2 * k) << x, y, 1, 0, 0, 0, -xp * x, -xp * y;
    m.row(2 * k + 1) << 0, 0, 0, x, y, 1, -yp * x, -yp * y;
    rhs(2 * k) = xp;
    rhs(2 * k + 1) = yp;
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(m);
  if (!lu.isInvertible())
    throw DegenerateConfiguration("corner configuration is degenerate");
  const Eigen::Matrix<double, 8, 1> h = lu.solve(rhs);
  Eigen::Matrix3d full;
  full << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  if (jacobian) {
    // Implicit differentiation of M(theta) h = r(theta): the only dependence
    // on offset t = (corner k, axis a) sits in row 2k+a, and
    // d h / d t = w_k * M^{-1} e_{2k+a} with w_k the projective denominator.
    const Eigen::Matrix<double, 8, 8> minv = lu.inverse();
    for (int k = 0; k < 4; ++k) {
      const double w =
          full(2, 0) * corners[k].x() + full(2, 1) * corners[k].y() + 1.0;
      jacobian->col(2 * k) = w * minv.col(2 * k);
      jacobian->col(2 * k + 1) = w * minv.col(2 * k + 1);
    }
  }
  return Homography::from_matrix(full);
}

/// Inverse of the corner-offset parameterization: where h sends the corners.
inline Eigen::Matrix<double, 8, 1> corner_offsets_from_homography(
    const Homography& h, const std::array<Eigen::Vector2d, 4>& corners) {
  Eigen::Matrix<double, 8, 1> offsets;
  for (int k = 0; k < 4; ++k) {
    const Eigen::Vector2d moved = apply(h, corners[k]);
    offsets(2 * k) = moved.x() - corners[k].x();
    offsets(2 * k + 1) = moved.y() - corners[k].y();
  }
  return offsets;
}

}  // namespace homoscale
