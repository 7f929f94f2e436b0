#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "homoscale/flow.hpp"
#include "homoscale/io.hpp"
#include "homoscale/rng.hpp"
#include "test_util.hpp"

using namespace homoscale;

TEST_CASE("flow_from_homography: identity and translation") {
  const MeshGrid g(16, 12);
  const HomographyFlow zero = flow_from_homography(Homography::identity(), g);
  CHECK(zero.u.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(zero.v.cwiseAbs().maxCoeff() < 1e-12);

  const HomographyFlow t =
      flow_from_homography(Homography::translation(5, -3), g);
  CHECK((t.u - 5.0).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((t.v + 3.0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("flow_from_homography: corners agree with apply()") {
  auto rng = derive_rng(43, 0);
  const MeshGrid g(320, 480);
  for (int trial = 0; trial < 10; ++trial) {
    const Homography h = testutil::random_homography(rng, 320, 480, 32);
    const HomographyFlow f = flow_from_homography(h, g);
    for (const auto& c : frame_corners(320, 480)) {
      const Eigen::Vector2d moved = apply(h, c);
      const int x = static_cast<int>(c.x()), y = static_cast<int>(c.y());
      CHECK(f.u(y, x) == doctest::Approx(moved.x() - c.x()).epsilon(1e-10));
      CHECK(f.v(y, x) == doctest::Approx(moved.y() - c.y()).epsilon(1e-10));
    }
  }
}

TEST_CASE("flow_from_homography: horizon on the grid raises GridDegenerate") {
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, 1, 0, -0.05, 0, 1;  // denominator zero at x = 20
  const Homography h = Homography::from_matrix(m);
  CHECK_THROWS_AS(flow_from_homography(h, MeshGrid(64, 8)), GridDegenerate);
}

TEST_CASE("homography_from_flow: trivial flows") {
  const MeshGrid g(20, 15);
  HomographyFlow zero(20, 15);
  CHECK(homography_from_flow(zero, g).distance(Homography::identity()) <
        1e-9);

  HomographyFlow constant(20, 15);
  constant.u.setConstant(5.0);
  constant.v.setConstant(-3.0);
  CHECK(homography_from_flow(constant, g)
            .distance(Homography::translation(5, -3)) < 1e-9);
}

TEST_CASE("property: flow <-> matrix round trip within 1e-6") {
  auto rng = derive_rng(47, 0);
  const MeshGrid g(64, 96);
  for (int trial = 0; trial < 25; ++trial) {
    const Homography h = testutil::random_homography(rng, 64, 96, 12);
    const HomographyFlow f = flow_from_homography(h, g);
    const Homography rec = homography_from_flow(f, g);
    CHECK((rec.matrix() - h.matrix()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("rescale_flow: trivial cases") {
  HomographyFlow zero(32, 24);
  const HomographyFlow z2 = rescale_flow(zero, 16, 12);
  CHECK(z2.width == 16);
  CHECK(z2.height == 12);
  CHECK(z2.u.cwiseAbs().maxCoeff() < 1e-9);

  // Pure scaling: constant (8,4) at 320x480 halves to (4,2) at 160x240.
  HomographyFlow constant(320, 480);
  constant.u.setConstant(8.0);
  constant.v.setConstant(4.0);
  const HomographyFlow half = rescale_flow(constant, 160, 240);
  CHECK((half.u - 4.0).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((half.v - 2.0).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("rescale_flow: commutes with matrix conjugation") {
  auto rng = derive_rng(53, 0);
  const MeshGrid big(320, 480);
  const MeshGrid small(256, 256);
  for (int trial = 0; trial < 5; ++trial) {
    const Homography h = testutil::random_homography(rng, 320, 480, 24);
    const HomographyFlow f = flow_from_homography(h, big);
    const HomographyFlow resized = rescale_flow(f, 256, 256);
    const Homography back = conjugate_by_scaling(
        homography_from_flow(resized, small), 256, 256, 320, 480);
    CHECK((back.matrix() - h.matrix()).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("property: composition consistency of flows") {
  // Flows do not add pointwise: flow of compose(A,B) at p equals
  // apply(A, p + flow_B(p)) - p.
  auto rng = derive_rng(59, 0);
  const MeshGrid g(48, 36);
  for (int trial = 0; trial < 10; ++trial) {
    const Homography a = testutil::random_homography(rng, 48, 36, 4);
    const Homography b = testutil::random_homography(rng, 48, 36, 4);
    const HomographyFlow fab = flow_from_homography(compose(a, b), g);
    const HomographyFlow fb = flow_from_homography(b, g);
    for (int i = 0; i < 20; ++i) {
      const int x = uniform_int(rng, 0, 47), y = uniform_int(rng, 0, 35);
      const Eigen::Vector2d p(x, y);
      const Eigen::Vector2d via =
          apply(a, Eigen::Vector2d(x + fb.u(y, x), y + fb.v(y, x)));
      CHECK(std::abs(fab.u(y, x) - (via.x() - p.x())) < 1e-8);
      CHECK(std::abs(fab.v(y, x) - (via.y() - p.y())) < 1e-8);
    }
  }
}

TEST_CASE("flow file round trip") {
  auto rng = derive_rng(61, 0);
  const MeshGrid g(17, 9);
  const Homography h = testutil::random_homography(rng, 17, 9, 2);
  const HomographyFlow f = flow_from_homography(h, g);

  const auto path = std::filesystem::temp_directory_path() / "homoscale_test.hflo";
  write_flow(path, f);
  const HomographyFlow r = read_flow(path);
  std::filesystem::remove(path);

  CHECK(r.width == f.width);
  CHECK(r.height == f.height);
  // f32 storage: round trip is exact at float precision.
  CHECK((r.u - f.u).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((r.v - f.v).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("homography JSON round trip") {
  auto rng = derive_rng(67, 0);
  const Homography h = testutil::random_homography(rng, 320, 480, 40);
  const Homography back = homography_from_json(homography_to_json(h));
  CHECK(back.distance(h) < 1e-12);

  // h33 = 0 falls back to the unit-Frobenius encoding with a flag.
  Eigen::Matrix3d m;
  m << 1, 0, 2, 0, 1, 0, 0.5, 0, 0;
  const Homography weird = Homography::from_matrix(m);
  const auto j = homography_to_json(weird);
  CHECK(j.contains("normalization"));
  CHECK(homography_from_json(j).distance(weird) < 1e-12);
}
