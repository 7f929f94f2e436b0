#pragma once

#include <random>

#include "homoscale/homography.hpp"
#include "homoscale/rng.hpp"

namespace homoscale::testutil {

/// Random homography via uniform 4-corner perturbation of the (w, h) frame.
inline Homography random_homography(std::mt19937_64& rng, double w, double h,
                                    double max_pert) {
  const auto corners = frame_corners(w, h);
  Eigen::Matrix<double, 8, 1> offsets;
  for (int i = 0; i < 8; ++i) offsets(i) = uniform(rng, -max_pert, max_pert);
  return homography_from_corner_offsets(corners, offsets);
}

inline Eigen::Vector2d random_point(std::mt19937_64& rng, double w, double h) {
  return {uniform(rng, 0.0, w - 1.0), uniform(rng, 0.0, h - 1.0)};
}

}  // namespace homoscale::testutil
