#include <doctest.h>

#include "homoscale/correlation.hpp"
#include "homoscale/rng.hpp"
#include "homoscale/synthesis.hpp"

using namespace homoscale;

namespace {

/// Feature map with seeded random unit descriptors (well-separated w.h.p.).
FeatureMap random_features(int w, int h, std::uint64_t seed, int cell = 4) {
  FeatureMap fm;
  fm.width = w;
  fm.height = h;
  fm.cell = cell;
  fm.desc.resize(10, w * h);
  auto rng = derive_rng(seed, 77);
  for (int p = 0; p < w * h; ++p) {
    Eigen::VectorXf d(10);
    for (int k = 0; k < 10; ++k)
      d(k) = static_cast<float>(uniform(rng, -1.0, 1.0));
    fm.desc.col(p) = d / d.norm();
  }
  return fm;
}

/// Integer content shift by whole cells via block copy (border rows/cols
/// replicate the source content so only the overlap is meaningful).
Image shift_image(const Image& img, int sx, int sy) {
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int ox = std::clamp(x - sx, 0, img.width - 1);
      const int oy = std::clamp(y - sy, 0, img.height - 1);
      out.planes[0](y, x) = img.planes[0](oy, ox);
    }
  return out;
}

}  // namespace

TEST_CASE("extract_features: constant image gives one fixed unit descriptor") {
  for (float level : {0.f, 0.4f}) {
    Image img(32, 32, 1, level);
    const FeatureMap fm = extract_features(img, 8);
    REQUIRE(fm.depth() == 10);
    Eigen::VectorXf expected = Eigen::VectorXf::Zero(10);
    expected(0) = 1.f;  // mean-only descriptor normalizes to e0
    for (int p = 0; p < fm.positions(); ++p)
      CHECK((fm.desc.col(p) - expected).cwiseAbs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("extract_features: unit norm everywhere; identical image, identical maps") {
  const Image img = make_texture(64, 48, 3);
  const FeatureMap a = extract_features(img, 8);
  const FeatureMap b = extract_features(img, 8);
  CHECK(a.width == 8);
  CHECK(a.height == 6);
  for (int p = 0; p < a.positions(); ++p) {
    CHECK(a.desc.col(p).norm() == doctest::Approx(1.f).epsilon(1e-5));
    CHECK((a.desc.col(p) - b.desc.col(p)).cwiseAbs().maxCoeff() == 0.f);
  }
}

TEST_CASE("extract_features: cell-multiple translation shifts the map") {
  const Image img = make_texture(64, 64, 5);
  const int cell = 8;
  const Image shifted = shift_image(img, 2 * cell, cell);
  const FeatureMap fa = extract_features(img, cell);
  const FeatureMap fb = extract_features(shifted, cell);
  // Interior overlap: stay one cell clear of the shift seam and the frame
  // borders on both maps so gradients see identical content.
  for (int cy = 2; cy <= 5; ++cy)
    for (int cx = 2; cx <= 4; ++cx) {
      const auto orig = fa.desc.col(cy * 8 + cx);
      const auto moved = fb.desc.col((cy + 1) * 8 + (cx + 2));
      CHECK((orig - moved).cwiseAbs().maxCoeff() == 0.f);
    }
}

TEST_CASE("global_correlation: self-correlation peaks on the diagonal at 1") {
  const FeatureMap fm = random_features(5, 4, 11);
  const CorrelationMap c = global_correlation(fm, fm);
  CHECK(c.channels() == 20);
  for (int q = 0; q < 20; ++q) {
    int arg = 0;
    float best = -2.f;
    for (int ch = 0; ch < 20; ++ch)
      if (c.values(ch, q) > best) {
        best = c.values(ch, q);
        arg = ch;
      }
    CHECK(arg == q);
    CHECK(best == doctest::Approx(1.f).epsilon(1e-5));
  }
}

TEST_CASE("global_correlation: 256x256 image at 1/16 cells gives 16x16x256") {
  const Image img = make_texture(256, 256, 13);
  const FeatureMap fm = extract_features(img, 16);
  const CorrelationMap c = global_correlation(fm, fm);
  CHECK(c.query_w == 16);
  CHECK(c.query_h == 16);
  CHECK(c.channels() == 256);
}

TEST_CASE("correlations match the brute-force all-pairs oracle exactly") {
  const FeatureMap a = random_features(8, 8, 17);
  const FeatureMap b = random_features(8, 8, 19);

  const CorrelationMap g = global_correlation(a, b);
  for (int q = 0; q < 64; ++q)
    for (int t = 0; t < 64; ++t) {
      double acc = 0.0;
      for (int k = 0; k < 10; ++k)
        acc += static_cast<double>(a.desc(k, q)) * b.desc(k, t);
      CHECK(g.values(t, q) == static_cast<float>(acc));
    }

  const int radius = 2;
  const CorrelationMap l = local_correlation(a, b, radius);
  for (int qy = 0; qy < 8; ++qy)
    for (int qx = 0; qx < 8; ++qx)
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int ch = (dy + radius) * 5 + (dx + radius);
          const float got = l.values(ch, qy * 8 + qx);
          if (qx + dx < 0 || qx + dx >= 8 || qy + dy < 0 || qy + dy >= 8) {
            CHECK(got == -1.f);
          } else {
            double acc = 0.0;
            for (int k = 0; k < 10; ++k)
              acc += static_cast<double>(a.desc(k, qy * 8 + qx)) *
                     b.desc(k, (qy + dy) * 8 + qx + dx);
            CHECK(got == static_cast<float>(acc));
          }
        }
}

TEST_CASE("local_correlation: center channel peaks at 1 on identical maps") {
  const FeatureMap fm = random_features(6, 6, 23);
  const CorrelationMap c = local_correlation(fm, fm, 4);
  CHECK(c.channels() == 81);
  const int center = 4 * 9 + 4;
  for (int q = 0; q < 36; ++q) {
    CHECK(c.values(center, q) == doctest::Approx(1.f).epsilon(1e-5));
    for (int ch = 0; ch < 81; ++ch)
      CHECK(c.values(ch, q) <= c.values(center, q) + 1e-6f);
  }
}

TEST_CASE("local_correlation agrees with global restricted to the radius") {
  const FeatureMap a = random_features(7, 5, 29);
  const FeatureMap b = random_features(7, 5, 31);
  const CorrelationMap g = global_correlation(a, b);
  const CorrelationMap l = local_correlation(a, b, 2);
  for (int qy = 0; qy < 5; ++qy)
    for (int qx = 0; qx < 7; ++qx)
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int tx = qx + dx, ty = qy + dy;
          if (tx < 0 || tx >= 7 || ty < 0 || ty >= 5) continue;
          CHECK(l.values((dy + 2) * 5 + (dx + 2), qy * 7 + qx) ==
                g.values(ty * 7 + tx, qy * 7 + qx));
        }
}

TEST_CASE("correlation values stay within [-1, 1]") {
  const Image img = make_texture(96, 64, 37);
  const Image img2 = make_texture(96, 64, 41);
  const FeatureMap a = extract_features(img, 8);
  const FeatureMap b = extract_features(img2, 8);
  const CorrelationMap g = global_correlation(a, b);
  CHECK(g.values.maxCoeff() <= 1.f + 1e-6f);
  CHECK(g.values.minCoeff() >= -1.f - 1e-6f);
}

TEST_CASE("matches_from_correlation: identical maps match themselves") {
  const FeatureMap fm = random_features(5, 5, 43);
  const CorrelationMap c = global_correlation(fm, fm);
  const Correspondences m = matches_from_correlation(c, 0.9);
  CHECK(m.size() == 25);
  for (const auto& p : m) CHECK((p.src - p.tgt).norm() < 1e-9);
}

TEST_CASE("matches_from_correlation: shifted maps reproduce the shift") {
  const Image img = make_texture(96, 96, 47);
  const int cell = 8;
  const Image shifted = shift_image(img, cell, 0);  // one cell right
  const FeatureMap a = extract_features(img, cell);
  const FeatureMap b = extract_features(shifted, cell);

  const CorrelationMap l = local_correlation(a, b, 3);
  const Correspondences m = matches_from_correlation(l, 0.95);
  int consistent = 0, considered = 0;
  for (const auto& p : m) {
    // Skip queries whose source cell touches the replicated border columns.
    if (p.src.x() < cell || p.src.x() > 96 - 2 * cell) continue;
    ++considered;
    if (std::abs((p.tgt.x() - p.src.x()) - cell) < 1e-9 &&
        std::abs(p.tgt.y() - p.src.y()) < 1e-9)
      ++consistent;
  }
  CHECK(considered >= 10);
  CHECK(consistent == considered);
}

TEST_CASE("matches_from_correlation: constant features are fully ambiguous") {
  Image img(64, 64, 1, 0.5f);
  const FeatureMap fm = extract_features(img, 8);
  const CorrelationMap c = global_correlation(fm, fm);
  CHECK_THROWS_AS(matches_from_correlation(c, 0.9), NoMatches);
}

TEST_CASE("depth mismatch rejected") {
  FeatureMap a = random_features(4, 4, 53);
  FeatureMap b = a;
  b.desc.conservativeResize(8, Eigen::NoChange);
  CHECK_THROWS_AS(global_correlation(a, b), DepthMismatch);
  CHECK_THROWS_AS(local_correlation(a, b, 2), DepthMismatch);
}
