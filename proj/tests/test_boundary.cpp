// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oicloc/boundary.hpp"
#include "oicloc/gradcheck.hpp"
#include "support.hpp"

namespace {

using namespace oicloc;
using oicloc::testing::uniform;

TEST(RegressAnchor, Examples) {
  auto a = regress_anchor(10, 4, {0, 0});
  EXPECT_DOUBLE_EQ(a.x1, 8);
  EXPECT_DOUBLE_EQ(a.x2, 12);
  a = regress_anchor(10, 4, {0.5, 0});
  EXPECT_DOUBLE_EQ(a.x1, 10);
  EXPECT_DOUBLE_EQ(a.x2, 14);
  a = regress_anchor(10, 4, {0, std::log(2.0)});
  EXPECT_NEAR(a.x1, 6, 1e-12);
  EXPECT_NEAR(a.x2, 14, 1e-12);
  EXPECT_NEAR(a.w, 8, 1e-12);
}

TEST(RegressAnchor, ZeroRegressionIsIdentityAnchor) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const double s = uniform(rng, 1, 100), w = uniform(rng, 1, 32);
    const auto a = regress_anchor(s, w, {0, 0});
    EXPECT_DOUBLE_EQ(a.x1, s - w / 2);
    EXPECT_DOUBLE_EQ(a.x2, s + w / 2);
  }
}

TEST(RegressAnchor, NonFiniteIsInputError) {
  EXPECT_THROW(regress_anchor(1, 2, {std::nan(""), 0}), InputError);
  EXPECT_THROW(regress_anchor(1, 2, {0, INFINITY}), InputError);
}

TEST(ClipZeroPad, Examples) {
  auto c = clip_zero_pad(-2, 5, 20);
  EXPECT_EQ(c.lo, 0);
  EXPECT_EQ(c.hi, 5);
  EXPECT_TRUE(c.lo_clipped);
  c = clip_zero_pad(3, 25, 20);
  EXPECT_EQ(c.lo, 3);
  EXPECT_EQ(c.hi, 21);
  EXPECT_TRUE(c.hi_clipped);
  c = clip_zero_pad(3, 5, 20);
  EXPECT_EQ(c.lo, 3);
  EXPECT_EQ(c.hi, 5);
  EXPECT_FALSE(c.lo_clipped || c.hi_clipped);
}

TEST(Inflate, RatioRegime) {
  const auto o = inflate(10, 14, 4, 0.25, 100);
  EXPECT_DOUBLE_EQ(o.X1, 9);
  EXPECT_DOUBLE_EQ(o.X2, 15);
  EXPECT_FALSE(o.min_offset);
}

TEST(Inflate, MinimumOffsetRegime) {
  const auto o = inflate(10, 11, 1, 0.25, 100);
  EXPECT_DOUBLE_EQ(o.X1, 9);
  EXPECT_DOUBLE_EQ(o.X2, 12);
  EXPECT_TRUE(o.min_offset);
}

TEST(Inflate, ClipsAtGridStart) {
  const auto o = inflate(0.5, 3, 2.5, 0.25, 20);
  EXPECT_DOUBLE_EQ(o.X1, 0);
  EXPECT_TRUE(o.X1_clipped);
  EXPECT_DOUBLE_EQ(o.X2, 4);
}

TEST(Inflate, RoundedMarginHolds) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5000; ++i) {
    const int T = 50;
    const double x1 = uniform(rng, 0, T + 1);
    const double x2 = uniform(rng, x1, T + 1);
    const double w = uniform(rng, 0.1, 40), alpha = uniform(rng, 0.05, 1.0);
    const auto o = inflate(x1, x2, w, alpha, T);
    const long r1 = round_boundary(x1), r2 = round_boundary(x2);
    if (!o.X1_clipped) {
      EXPECT_LE(round_boundary(o.X1), r1 - 1);
    }
    if (!o.X2_clipped) {
      EXPECT_GE(round_boundary(o.X2), r2 + 1);
    }
    EXPECT_GE(o.X1, 0.0);
    EXPECT_LE(o.X2, T + 1.0);
  }
}

TEST(TransformAnchor, OrderIsRegressClipInflateClip) {
  // anchor regressed past the start: inner clips to 0 first, then the
  // outer boundary is inflated from the clipped inner and clipped again
  const auto a = transform_anchor(2, 8, {0, 0}, 0.25, 20);
  EXPECT_DOUBLE_EQ(a.x1, 0);
  EXPECT_DOUBLE_EQ(a.x2, 6);
  EXPECT_DOUBLE_EQ(a.X1, 0);
  EXPECT_DOUBLE_EQ(a.X2, 8);
  EXPECT_TRUE(a.state.x1_clipped);
  EXPECT_TRUE(a.state.X1_clipped);
  // an inner regressed wholly off the start collapses onto 0 and is then
  // inflated from there, which leaves a one-snippet ring on the right
  const auto off = transform_anchor(2, 4, {-2, 0}, 0.25, 20);
  EXPECT_DOUBLE_EQ(off.x1, 0);
  EXPECT_DOUBLE_EQ(off.x2, 0);
  EXPECT_DOUBLE_EQ(off.X1, 0);
  EXPECT_DOUBLE_EQ(off.X2, 1);
  EXPECT_FALSE(a.degenerate);
}

TEST(TransformAnchor, FlatAgainstBothEndsIsDegenerate) {
  const auto a = transform_anchor(5, 40, {0, 0}, 0.25, 8);
  EXPECT_TRUE(a.degenerate);
}

TEST(TransformBackward, ZeroUpstreamGivesZero) {
  const auto g = transform_backward({}, 4, 2, {0.3, -0.2}, 0.25, {});
  EXPECT_EQ(g.d_tx, 0.0);
  EXPECT_EQ(g.d_tw, 0.0);
}

TEST(TransformBackward, UniformCasGivesZero) {
  const Cas c(oicloc::testing::constant_matrix(1, 30, 0.4));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const RegressionPair r{uniform(rng, -0.5, 0.5), uniform(rng, -1, 1)};
    const auto a = transform_anchor(15, 4, r, 0.25, 30);
    const auto g = transform_backward(oic_backward(c, a.hypothesis(1)), 15, 4, r, 0.25, a.state);
    EXPECT_NEAR(g.d_tx, 0.0, 1e-12);
    EXPECT_NEAR(g.d_tw, 0.0, 1e-12);
  }
}

TEST(TransformBackward, PartialsOfEachRegime) {
  const double w_a = 4, alpha = 0.25;
  const RegressionPair r{0.1, 0.2};
  const double w = w_a * std::exp(r.t_w);
  auto unit = [&](int which, const ClipState& st) {
    BoundaryGradients g;
    (which == 0 ? g.d_x1 : which == 1 ? g.d_x2 : which == 2 ? g.d_X1 : g.d_X2) = 1.0;
    return transform_backward(g, 10, w_a, r, alpha, st);
  };
  const ClipState ratio{}, min_off{false, false, false, false, true};
  EXPECT_DOUBLE_EQ(unit(0, ratio).d_tw, -w / 2);
  EXPECT_DOUBLE_EQ(unit(1, ratio).d_tw, w / 2);
  EXPECT_DOUBLE_EQ(unit(2, ratio).d_tw, -w / 2 - alpha * w);
  EXPECT_DOUBLE_EQ(unit(3, ratio).d_tw, w / 2 + alpha * w);
  EXPECT_DOUBLE_EQ(unit(2, min_off).d_tw, -w / 2);
  EXPECT_DOUBLE_EQ(unit(3, min_off).d_tw, w / 2);
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(unit(c, ratio).d_tx, w_a);
  // straight through: clip flags do not change the partials
  const ClipState clipped{true, true, true, true, false};
  for (int c = 0; c < 4; ++c) {
    EXPECT_DOUBLE_EQ(unit(c, clipped).d_tw, unit(c, ratio).d_tw);
    EXPECT_DOUBLE_EQ(unit(c, clipped).d_tx, unit(c, ratio).d_tx);
  }
}

// Within one rounding cell the loss is constant, so the check linearizes it:
// L(t) = sum_c g_c * coord_c(t) with g frozen at the base point.
TEST(TransformBackward, MatchesFiniteDifferenceOfLinearizedLoss) {
  const Cas c = oicloc::testing::cas0();
  const double s_x = 4, w_a = 2, alpha = 0.25;
  const RegressionPair r{0, std::log(1.0)};
  const auto a = transform_anchor(s_x, w_a, r, alpha, 7);
  ASSERT_FALSE(a.state.x1_clipped || a.state.x2_clipped || a.state.X1_clipped || a.state.X2_clipped);
  const BoundaryGradients g = oic_backward(c, a.hypothesis(1));
  auto lin = [&](RegressionPair q) {
    const auto b = transform_anchor(s_x, w_a, q, alpha, 7);
    EXPECT_EQ(round_boundary(b.x1), round_boundary(a.x1));
    EXPECT_EQ(round_boundary(b.X2), round_boundary(a.X2));
    return g.d_x1 * b.x1 + g.d_x2 * b.x2 + g.d_X1 * b.X1 + g.d_X2 * b.X2;
  };
  const double h = 1e-3;
  const double fd_tx = (lin({h, r.t_w}) - lin({-h, r.t_w})) / (2 * h);
  const double fd_tw = (lin({0, r.t_w + h}) - lin({0, r.t_w - h})) / (2 * h);
  const auto an = transform_backward(g, s_x, w_a, r, alpha, a.state);
  EXPECT_LE(relative_error(an.d_tx, fd_tx), 1e-4);
  EXPECT_LE(relative_error(an.d_tw, fd_tw), 1e-4);
}

TEST(TransformBackward, GradcheckSuitePasses) {
  GradcheckOptions o;
  o.seed = 11;
  const SuiteResult s = gradcheck_boundary(o);
  EXPECT_TRUE(s.passed()) << s.failed << " failures, worst " << s.worst;
  EXPECT_GT(s.checked, 500);
}

TEST(AnchorConfig, Validation) {
  EXPECT_NO_THROW(AnchorConfig{}.validate());
  EXPECT_THROW(AnchorConfig{{}}.validate(), ConfigError);
  EXPECT_THROW((AnchorConfig{{2, 2}}.validate()), ConfigError);
  EXPECT_THROW((AnchorConfig{{0.5, 2}}.validate()), ConfigError);
}

}  // namespace
