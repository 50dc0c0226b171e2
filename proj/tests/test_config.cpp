// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "oicloc/app.hpp"

namespace {

using namespace oicloc;
using nlohmann::json;

const fs::path kConfigs = fs::path(OICLOC_CONFIG_DIR);

TEST(Config, MinimalIsThumosProfile) {
  const RunConfig c = parse_run_config(json{{"version", 1}});
  EXPECT_EQ(c.profile, "thumos");
  EXPECT_EQ(c.anchors.scales, (std::vector<double>{1, 2, 4, 8, 16, 32}));
  EXPECT_EQ(c.alpha, 0.25);
  EXPECT_EQ(c.selection.act_min, 0.1);
  EXPECT_EQ(c.selection.loss_max, -0.3);
  EXPECT_EQ(c.selection.nms_iou, 0.4);
  EXPECT_EQ(c.att_threshold, std::optional<double>(7.0));
  EXPECT_EQ(c.sgd.lr, 1e-3);
  EXPECT_EQ(c.sgd.lr_step, 200);
  EXPECT_EQ(c.sgd.lr_gamma, 0.1);
  EXPECT_EQ(c.network().num_anchors, 6);
  EXPECT_EQ(c.network().hidden_layers, 3);
}

TEST(Config, ActivityNetProfile) {
  const RunConfig c = parse_run_config(json{{"version", 1}, {"profile", "activitynet"}});
  EXPECT_EQ(c.anchors.scales, (std::vector<double>{16, 32, 64, 128, 256, 512}));
  EXPECT_EQ(c.sgd.lr_step, 500);
  EXPECT_EQ(c.eval_profile, "activitynet");
}

TEST(Config, SyntheticProfileUsesGeneratedCorpus) {
  const RunConfig c = parse_run_config(json{{"version", 1}, {"profile", "synthetic"}});
  ASSERT_TRUE(c.synth.has_value());
  EXPECT_FALSE(c.att_threshold.has_value());
  EXPECT_EQ(c.feature_dim, c.synth->feature_dim);
  const RunConfig d = parse_run_config(json{{"version", 1}, {"profile", "synthetic"}, {"synth", {{"feature_dim", 5}}}});
  EXPECT_EQ(d.feature_dim, 5);
  EXPECT_EQ(d.synth->num_classes, c.synth->num_classes);
}

TEST(Config, ExplicitKeysOverrideProfile) {
  const RunConfig c = parse_run_config(
      json{{"version", 1}, {"alpha", 0.5}, {"anchors", {2, 4}}, {"att_threshold", nullptr}, {"train_loss", "inner_only"},
           {"ap_mode", "eleven_point"}, {"lr", 0.01}});
  EXPECT_EQ(c.alpha, 0.5);
  EXPECT_EQ(c.network().num_anchors, 2);
  EXPECT_FALSE(c.att_threshold.has_value());
  EXPECT_EQ(c.train_loss, LossKind::InnerOnly);
  EXPECT_EQ(c.ap_mode, ApMode::ElevenPoint);
  EXPECT_EQ(c.sgd.lr, 0.01);
}

TEST(Config, UnknownKeyIsError) {
  EXPECT_THROW(parse_run_config(json{{"version", 1}, {"alpah", 0.5}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"version", 1}, {"synth", {{"t_mid", 3}}}}), ConfigError);
}

TEST(Config, VersionRequiredAndChecked) {
  EXPECT_THROW(parse_run_config(json{{"alpha", 0.5}}), ConfigError);
  EXPECT_THROW(parse_run_config(json{{"version", 2}}), ConfigError);
  EXPECT_THROW(parse_run_config(json::array()), ConfigError);
}

TEST(Config, BadValuesAreErrors) {
  const std::vector<json> bad{
      {{"version", 1}, {"profile", "kinetics"}},  {{"version", 1}, {"alpha", 0}},
      {{"version", 1}, {"alpha", "wide"}},        {{"version", 1}, {"anchors", json::array()}},
      {{"version", 1}, {"anchors", {4, 2, 4}}},   {{"version", 1}, {"momentum", 1.0}},
      {{"version", 1}, {"lr", -1}},               {{"version", 1}, {"nms_iou", 1.5}},
      {{"version", 1}, {"threshold_tau", 1.0}},   {{"version", 1}, {"threshold_taus", {0.2, 0}}},
      {{"version", 1}, {"train_loss", "l2"}},     {{"version", 1}, {"ap_mode", "coco"}},
      {{"version", 1}, {"eval_profile", "coco"}}, {{"version", 1}, {"epochs", -1}},
      {{"version", 1}, {"hidden", 0}},            {{"version", 1}, {"profile", "synthetic"}, {"synth", {{"t_min", 0}}}},
  };
  for (const auto& j : bad) EXPECT_THROW(parse_run_config(j), ConfigError) << j.dump();
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"thumos.json", "activitynet.json", "synthetic.json"})
    EXPECT_NO_THROW(load_run_config(kConfigs / name)) << name;
  EXPECT_EQ(load_run_config(kConfigs / "synthetic.json", 42).seed, 42u);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_run_config(kConfigs / "does_not_exist.json"), ConfigError);
}

TEST(Config, SynthSpecRoundTrips) {
  SynthSpec s = default_synth_spec();
  s.num_videos = 7;
  s.dip_level = 0.25;
  EXPECT_EQ(synth_spec_to_json(parse_synth_spec(synth_spec_to_json(s))), synth_spec_to_json(s));
}

}  // namespace
