// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oicloc/baselines.hpp"
#include "support.hpp"

namespace {

using namespace oicloc;
using oicloc::testing::cas0;
using oicloc::testing::uniform_int;

RunConfig small_config() {
  RunConfig c = profile_defaults("synthetic");
  c.anchors.scales = {1, 2, 4, 8, 16};
  c.feature_dim = 1;
  c.hidden = 8;
  return c;
}

VideoRecord video_of(const Cas& cas, const std::string& id = "v") {
  VideoRecord v;
  v.video_id = id;
  v.cas = cas;
  v.labels = {1};
  v.fps = 30.0;
  return v;
}

TEST(Threshold, RunsOfConsecutiveSnippets) {
  const Cas c = oicloc::testing::track({0, 1, 1, 0, 1, 1, 1, 0});
  const auto p = threshold_localize(c, 1, 0.5, 30.0);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].hyp.x1, 2);
  EXPECT_EQ(p[0].hyp.x2, 3);
  EXPECT_EQ(p[1].hyp.x1, 5);
  EXPECT_EQ(p[1].hyp.x2, 7);
  // snippets 2..3 span frames 16..45
  EXPECT_DOUBLE_EQ(p[0].start_s, 0.5);
  EXPECT_DOUBLE_EQ(p[0].end_s, 1.5);
  EXPECT_DOUBLE_EQ(p[1].score, 1.0);
}

TEST(Threshold, AllBelowGivesNothing) {
  EXPECT_TRUE(threshold_localize(oicloc::testing::track({0.1, 0.2, 0.3}), 1, 0.5, 30).empty());
  EXPECT_THROW(threshold_localize(cas0(), 1, 1.0, 30), InputError);
}

TEST(Threshold, InteriorDipSplitsInstance) {
  const auto p = threshold_localize(oicloc::testing::track({0, .9, .9, .2, .9, .9, 0}), 1, 0.5, 30);
  EXPECT_EQ(p.size(), 2u);
}

TEST(Threshold, SegmentsAreDisjointAndMaximal) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const int T = uniform_int(rng, 1, 50);
    const Cas c = oicloc::testing::random_cas(rng, 1, T);
    const double tau = oicloc::testing::uniform(rng, 0.05, 0.95);
    std::vector<int> covered(static_cast<std::size_t>(T + 2), 0);
    for (const auto& p : threshold_localize(c, 1, tau, 30)) {
      const int s = static_cast<int>(p.hyp.x1), e = static_cast<int>(p.hyp.x2);
      EXPECT_LT(c.at(1, s - 1), tau);
      EXPECT_LT(c.at(1, e + 1), tau);
      for (int t = s; t <= e; ++t) {
        EXPECT_GE(c.at(1, t), tau);
        EXPECT_EQ(covered[static_cast<std::size_t>(t)]++, 0);
      }
    }
    for (int t = 1; t <= T; ++t) EXPECT_EQ(covered[static_cast<std::size_t>(t)] > 0, c.at(1, t) >= tau);
  }
}

TEST(OicSelection, WorkedExampleFindsMinimumLossSegment) {
  const auto got = oic_selection_enumerate(cas0(), 1, 7, 0.25, -0.3, 0.4, 30.0);
  const auto want = oicloc::testing::ref_enumerate(cas0(), 1, 7, 0.25, -0.3, 0.4);
  ASSERT_FALSE(got.empty());
  ASSERT_EQ(got.size(), want.size());
  // best of all 28 candidates
  double best = 1e9;
  for (int a = 1; a <= 7; ++a)
    for (int b = a; b <= 7; ++b) {
      double X1, X2;
      oicloc::testing::ref_outer(a, b, b - a + 1, 0.25, 7, X1, X2);
      best = std::min(best, oicloc::testing::ref_loss(cas0(), 1, a, b, X1, X2).loss);
    }
  EXPECT_NEAR(got[0].loss, best, 1e-12);
  EXPECT_EQ(got[0].hyp.x1, want[0].x1);
  EXPECT_EQ(got[0].hyp.x2, want[0].x2);
}

TEST(OicSelection, UniformCasOnlyContrastsWithPad) {
  // inside the video there is no contrast; only rings on the zero pad score
  const Cas c(oicloc::testing::constant_matrix(1, 12, 0.6));
  const auto got = oic_selection_enumerate(c, 1, 12, 0.25, -0.3, 0.4, 30);
  for (const auto& p : got) EXPECT_TRUE(p.hyp.X1 < 1 || p.hyp.X2 > 12);
}

TEST(OicSelection, MatchesReferenceOnRandomVideos) {
  std::mt19937_64 rng(2);
  std::size_t total = 0;
  for (int v = 0; v < 100; ++v) {
    const int T = uniform_int(rng, 1, 30);
    const Cas c = oicloc::testing::blocky_cas(rng, 1, T);
    const int cap = v % 3 == 0 ? uniform_int(rng, 1, T) : T;
    const auto got = oic_selection_enumerate(c, 1, cap, 0.25, -0.3, 0.4, 30);
    const auto want = oicloc::testing::ref_enumerate(c, 1, cap, 0.25, -0.3, 0.4);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].hyp.x1, want[i].x1);
      EXPECT_EQ(got[i].hyp.x2, want[i].x2);
      EXPECT_EQ(got[i].hyp.X1, want[i].X1);
      EXPECT_EQ(got[i].hyp.X2, want[i].X2);
      EXPECT_NEAR(got[i].loss, want[i].loss, 1e-12);
    }
    total += got.size();
  }
  EXPECT_GT(total, 50u);
  EXPECT_THROW(oic_selection_enumerate(cas0(), 1, 8, 0.25, -0.3, 0.4, 30), InputError);
}

TEST(DirectOptimize, ZeroCasGivesNothing) {
  const RunConfig cfg = small_config();
  EXPECT_TRUE(direct_optimize(video_of(Cas(oicloc::testing::constant_matrix(1, 30, 0.0))), cfg).empty());
}

TEST(DirectOptimize, CleanPlateauIsRecovered) {
  std::vector<double> f(60, 0.0);
  for (int t = 21; t <= 36; ++t) f[t - 1] = 0.9;
  const VideoRecord v = video_of(oicloc::testing::track(f));
  const RunConfig cfg = small_config();
  const auto preds = direct_optimize(v, cfg);
  ASSERT_FALSE(preds.empty());
  const auto best = *std::max_element(preds.begin(), preds.end(),
                                      [](const Prediction& a, const Prediction& b) { return a.score < b.score; });
  EXPECT_NEAR(round_boundary(best.hyp.x1), 21, 1);
  EXPECT_NEAR(round_boundary(best.hyp.x2), 36, 1);
}

TEST(DirectOptimize, ZeroIterationsEqualsUntrainedSelection) {
  std::mt19937_64 rng(3);
  const VideoRecord v = video_of(oicloc::testing::blocky_cas(rng, 1, 40));
  RunConfig cfg = small_config();
  cfg.direct_opt_iters = 0;
  RunConfig local = cfg;
  local.seed = cfg.seed ^ stable_hash(v.video_id);
  const TrainState fresh = fresh_state(local);
  const auto want = predict_video(fresh.net, v, local, Mode::Train, LossKind::Oic, cfg.alpha);
  const auto got = direct_optimize(v, cfg);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].hyp.x1, want[i].hyp.x1);
}

TEST(DirectOptimize, DeterministicPerVideoAndSeed) {
  std::mt19937_64 rng(4);
  const Cas c = oicloc::testing::blocky_cas(rng, 1, 40);
  const RunConfig cfg = small_config();
  const auto a = direct_optimize(video_of(c, "a"), cfg);
  const auto b = direct_optimize(video_of(c, "a"), cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].start_s, b[i].start_s);
    EXPECT_EQ(a[i].score, b[i].score);
  }
}

TEST(InnerOnly, LossesOnWorkedExample) {
  const SegmentHypothesis h{3, 5, 2, 6, 1};
  EXPECT_NEAR(inner_only_forward(cas0(), h), -0.9, 1e-12);
  EXPECT_NEAR(oic_forward(cas0(), h).loss, -0.8, 1e-12);
}

TEST(InnerOnly, OnlyContrastLocksOntoPlateau) {
  // plateau 1.0 on 11..20 flanked by 0.5 on 6..10 and 21..25
  std::vector<double> f(30, 0.0);
  for (int t = 6; t <= 25; ++t) f[t - 1] = 0.5;
  for (int t = 11; t <= 20; ++t) f[t - 1] = 1.0;
  const Cas c = oicloc::testing::track(f);
  // inner strictly inside the plateau: contrast grows it, inner-only is flat
  const SegmentHypothesis inside{13, 18, 10, 21, 1};
  EXPECT_GT(oic_backward(c, inside).d_x1, 0.0);
  EXPECT_LT(oic_backward(c, inside).d_x2, 0.0);
  EXPECT_EQ(inner_only_backward(c, inside).d_x1, 0.0);
  EXPECT_EQ(inner_only_backward(c, inside).d_x2, 0.0);
  // one snippet into the flanks: contrast pulls both ends back
  const SegmentHypothesis wide{10, 21, 7, 24, 1};
  EXPECT_LT(oic_backward(c, wide).d_x1, 0.0);
  EXPECT_GT(oic_backward(c, wide).d_x2, 0.0);
  // inner-only rates one peak snippet as highly as the whole plateau
  const SegmentHypothesis plateau{11, 20, 8, 23, 1}, peak{15, 15, 14, 16, 1};
  EXPECT_EQ(inner_only_forward(c, peak), inner_only_forward(c, plateau));
  EXPECT_LT(oic_forward(c, plateau).loss, oic_forward(c, peak).loss - 0.4);
}

TEST(InnerOnly, TrainingUsesInnerOnlyLoss) {
  SynthSpec spec = default_synth_spec();
  spec.num_videos = 4;
  spec.t_min = spec.t_max = 60;
  auto corpus = synth_corpus(spec, 1);
  RunConfig cfg = profile_defaults("synthetic");
  std::vector<StepLog> logs;
  const TrainState st = train_inner_only(corpus, cfg, [&](const StepLog& l) { logs.push_back(l); });
  ASSERT_EQ(logs.size(), 4u);
  EXPECT_EQ(st.opt.iteration(), 4);
  // inner-only losses are minus an average activation
  for (const auto& l : logs)
    if (l.kept > 0) {
      EXPECT_LE(l.loss, 0.0);
    }
}

}  // namespace
