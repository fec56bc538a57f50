// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "splitnerf/losses.hpp"
#include "splitnerf/renderer.hpp"

using namespace splitnerf;

TEST_CASE("photometric loss", "[losses]") {
  SECTION("identity gives zero") {
    MatX3 a = MatX3::Random(8, 3);
    REQUIRE(photometric_loss(a, a) == 0.0);
  }
  SECTION("single-ray hand value") {
    MatX3 rendered(1, 3), truth(1, 3);
    truth << 0.1, 0.5, 0.9;
    rendered = truth;
    rendered(0, 0) += 0.3;
    rendered(0, 2) -= 0.4;
    REQUIRE(photometric_loss(rendered, truth) ==
            Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("invariant to ray ordering") {
    MatX3 a = MatX3::Random(16, 3), b = MatX3::Random(16, 3);
    MatX3 ap(16, 3), bp(16, 3);
    for (int i = 0; i < 16; ++i) {
      ap.row(i) = a.row(15 - i);
      bp.row(i) = b.row(15 - i);
    }
    REQUIRE(photometric_loss(a, b) ==
            Catch::Approx(photometric_loss(ap, bp)).margin(1e-15));
  }
  SECTION("count mismatch throws") {
    MatX3 a = MatX3::Zero(3, 3), b = MatX3::Zero(4, 3);
    REQUIRE_THROWS_AS(photometric_loss(a, b), InputError);
  }
}

TEST_CASE("smoothness pair weight", "[losses]") {
  const Vec3 c(0.3, 0.4, 0.5);
  SECTION("equal colors give weight 1 for any gamma") {
    REQUIRE(smoothness_pair_weight(c, c, 10.0) == 1.0);
    REQUIRE(smoothness_pair_weight(c, c, 0.0) == 1.0);
  }
  SECTION("gamma 0 gives weight 1 for any colors") {
    REQUIRE(smoothness_pair_weight(c, Vec3(0.9, 0.1, 0.0), 0.0) == 1.0);
  }
  SECTION("conceptual pair: equal colors, depths 1.0 / 1.5 contribute 0.5") {
    const double w = smoothness_pair_weight(c, c, 7.0);
    REQUIRE(w * std::abs(1.0 - 1.5) == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("an L1 color gap of ln2/gamma halves the contribution") {
    const double gamma = 8.0;
    Vec3 c2 = c;
    c2[1] += std::log(2.0) / gamma;
    const double w = smoothness_pair_weight(c, c2, gamma);
    REQUIRE(w * std::abs(1.0 - 1.5) == Catch::Approx(0.25).margin(1e-12));
  }
  SECTION("weight stays in (0, 1]") {
    Stream rng = make_stream(31, 0);
    for (int trial = 0; trial < 200; ++trial) {
      Vec3 a(rng(), rng(), rng()), b(rng(), rng(), rng());
      const double w = smoothness_pair_weight(a, b, 10.0);
      REQUIRE(w > 0.0);
      REQUIRE(w <= 1.0);
      if ((a - b).cwiseAbs().sum() > 0.0) REQUIRE(w < 1.0);
    }
  }
}

TEST_CASE("depth smoothness over a patch", "[losses]") {
  const int P = 5;
  Stream rng = make_stream(32, 0);
  MatX3 colors(P * P, 3);
  VectorXd depths(P * P);
  for (int i = 0; i < P * P; ++i) {
    depths[i] = 2.0 + rng();
    for (int ch = 0; ch < 3; ++ch) colors(i, ch) = rng();
  }
  const double gamma = 10.0;

  SECTION("constant depth patch scores zero") {
    REQUIRE(depth_smoothness_loss(colors, VectorXd::Constant(P * P, 3.0), P,
                                  gamma) == 0.0);
  }
  SECTION("matches an independent full-pair enumeration") {
    // Brute force over all ordered 8-neighbor pairs, halved.
    double sum = 0.0;
    int count = 0;
    for (int r = 0; r < P; ++r)
      for (int c = 0; c < P; ++c)
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int r2 = r + dr, c2 = c + dc;
            if (r2 < 0 || r2 >= P || c2 < 0 || c2 >= P) continue;
            const int a = r * P + c, b = r2 * P + c2;
            sum += smoothness_pair_weight(colors.row(a).transpose(),
                                          colors.row(b).transpose(), gamma) *
                   std::abs(depths[a] - depths[b]);
            ++count;
          }
    const double oracle = (sum / 2.0) / (count / 2);
    REQUIRE(depth_smoothness_loss(colors, depths, P, gamma) ==
            Catch::Approx(oracle).margin(1e-12));
  }
  SECTION("invariant to a constant depth offset") {
    VectorXd shifted = depths.array() + 5.0;
    REQUIRE(depth_smoothness_loss(colors, depths, P, gamma) ==
            Catch::Approx(depth_smoothness_loss(colors, shifted, P, gamma))
                .margin(1e-12));
  }
  SECTION("patches below 3x3 are rejected") {
    MatX3 tiny = MatX3::Zero(4, 3);
    REQUIRE_THROWS_AS(depth_smoothness_loss(tiny, VectorXd::Zero(4), 2, gamma),
                      InputError);
  }
}

TEST_CASE("bidirectional depth consistency loss", "[losses]") {
  SECTION("single narrow peak is consistent") {
    RaySamples s;
    s.t = VectorXd::Constant(1, 3.0);
    s.delta = VectorXd::Constant(1, 1.0);
    const VectorXd sigma = VectorXd::Constant(1, 20.0);
    const double fwd = forward_depth(sigma, s);
    const double bwd = backward_depth(sigma, s);
    VectorXd f(1), b(1);
    f << fwd;
    b << bwd;
    REQUIRE(bdc_loss(f, b) < 1e-4);
  }
  SECTION("two opaque peaks at t=1,2 give a unit gap") {
    RaySamples s;
    s.t = VectorXd::LinSpaced(2, 1.0, 2.0);
    s.delta = VectorXd::Constant(2, 1.0);
    const VectorXd sigma = VectorXd::Constant(2, 20.0);
    VectorXd f(1), b(1);
    f << forward_depth(sigma, s);
    b << backward_depth(sigma, s);
    REQUIRE(bdc_loss(f, b) == Catch::Approx(1.0).margin(1e-3));
  }
  SECTION("uniform fog over [0,4] at N=256: pinned regression value") {
    const int n = 256;
    RaySamples s;
    const double w = 4.0 / n;
    s.t = VectorXd::LinSpaced(n, 0.0, 4.0 - w);
    s.delta = VectorXd::Constant(n, w);
    const VectorXd sigma = VectorXd::Ones(n);
    VectorXd f(1), b(1);
    f << forward_depth(sigma, s);
    b << backward_depth(sigma, s);
    const double gap = bdc_loss(f, b);
    REQUIRE(gap > 0.0);
    REQUIRE(gap == Catch::Approx(2.1098538886560267).margin(1e-10));
  }
  SECTION("zero for any profile symmetric about a single opaque sample") {
    RaySamples s;
    s.t = VectorXd::LinSpaced(5, 1.0, 3.0);
    s.delta = VectorXd::Constant(5, 0.5);
    VectorXd sigma = VectorXd::Zero(5);
    sigma[2] = 40.0;
    VectorXd f(1), b(1);
    f << forward_depth(sigma, s);
    b << backward_depth(sigma, s);
    REQUIRE(bdc_loss(f, b) < 1e-12);
  }
}

TEST_CASE("mask consistency loss", "[losses]") {
  SECTION("matching prediction scores zero") {
    VectorXd beta = VectorXd::Ones(6);
    REQUIRE(mask_loss(beta, beta) == 0.0);
  }
  SECTION("flat 0.5 against an all-ones mask scores 0.5") {
    const VectorXd beta = VectorXd::Constant(10, 0.5);
    const VectorXd mask = VectorXd::Ones(10);
    REQUIRE(mask_loss(beta, mask) == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("no masked rays contribute zero") {
    REQUIRE(mask_loss(VectorXd(), VectorXd()) == 0.0);
  }
  SECTION("size mismatch throws") {
    REQUIRE_THROWS_AS(mask_loss(VectorXd::Zero(3), VectorXd::Zero(4)),
                      InputError);
  }
}

TEST_CASE("weighted total loss", "[losses]") {
  LossBreakdown b;
  b.pm = 1.0;
  b.depth_smooth = 1.0;
  b.bdc = 1.0;
  b.mask_beta = 0.0;
  SECTION("zero weights reduce to the photometric term") {
    LossWeights w{0.0, 0.0, 0.0, 10.0};
    REQUIRE(total_loss(b, w) == 1.0);
  }
  SECTION("unit components at the standard caps") {
    LossWeights w{0.1, 0.05, 1.0, 10.0};
    REQUIRE(total_loss(b, w) == Catch::Approx(1.15).margin(1e-15));
    b.mask_beta = 1.0;
    REQUIRE(total_loss(b, w) == Catch::Approx(2.15).margin(1e-15));
  }
  SECTION("monotone in each component") {
    LossWeights w{0.1, 0.05, 1.0, 10.0};
    const double base = total_loss(b, w);
    LossBreakdown b2 = b;
    b2.bdc += 0.5;
    REQUIRE(total_loss(b2, w) >= base);
    LossBreakdown b3 = b;
    b3.depth_smooth += 0.5;
    REQUIRE(total_loss(b3, w) >= base);
  }
  SECTION("negative weights are rejected") {
    LossWeights w{-0.1, 0.05, 1.0, 10.0};
    REQUIRE_THROWS_AS(total_loss(b, w), InputError);
  }
}
