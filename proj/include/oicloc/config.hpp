// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "oicloc/boundary.hpp"
#include "oicloc/cas.hpp"
#include "oicloc/error.hpp"
#include "oicloc/eval.hpp"
#include "oicloc/regressor.hpp"
#include "oicloc/selection.hpp"

namespace oicloc {

constexpr int kConfigVersion = 1;

/// Everything a run needs besides data. Three named profiles seed the
/// defaults; explicit keys override them.
struct RunConfig {
  int version = kConfigVersion;
  std::string profile = "thumos";

  AnchorConfig anchors;
  double alpha = 0.25;
  SelectionParams selection;
  std::optional<double> att_threshold = 7.0;  // nullopt disables gating

  SgdConfig sgd;
  int epochs = 1;
  int feature_dim = 2048;
  int hidden = 128;
  std::uint64_t seed = 0;
  LossKind train_loss = LossKind::Oic;

  int direct_opt_iters = 25;
  double threshold_tau = 0.1;
  std::vector<double> threshold_taus{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int enum_max_len = 0;  // 0 means the whole video
  std::vector<double> alpha_sweep{0.125, 0.25, 0.5};

  std::string eval_profile = "thumos";
  ApMode ap_mode = ApMode::Envelope;

  std::string train_manifest;
  std::string test_manifest;
  std::optional<SynthSpec> synth;
  int synth_train_videos = 200;
  int synth_test_videos = 100;

  NetworkConfig network() const {
    NetworkConfig n;
    n.feature_dim = feature_dim;
    n.hidden = hidden;
    n.num_anchors = static_cast<int>(anchors.size());
    return n;
  }

  void validate() const {
    if (version != kConfigVersion)
      throw ConfigError("unsupported config version " + std::to_string(version));
    anchors.validate();
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(selection.nms_iou >= 0.0 && selection.nms_iou <= 1.0))
      throw ConfigError("nms_iou must lie in [0, 1]");
    if (!(sgd.lr > 0.0) || sgd.lr_step < 1 || !(sgd.momentum >= 0.0 && sgd.momentum < 1.0) ||
        !(sgd.weight_decay >= 0.0))
      throw ConfigError("invalid optimizer settings");
    if (epochs < 0 || direct_opt_iters < 0 || enum_max_len < 0)
      throw ConfigError("epochs, direct_opt_iters and enum_max_len must be non-negative");
    if (!(threshold_tau > 0.0 && threshold_tau < 1.0)) throw ConfigError("threshold_tau must lie in (0, 1)");
    for (double t : threshold_taus)
      if (!(t > 0.0 && t < 1.0)) throw ConfigError("threshold_taus must lie in (0, 1)");
    for (double a : alpha_sweep)
      if (!(a > 0.0)) throw ConfigError("alpha_sweep entries must be positive");
    try {
      thresholds_for_profile(eval_profile);
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
    network().validate();
    if (synth) {
      try {
        synth->validate();
      } catch (const InputError& e) {
        throw ConfigError(e.what());
      }
    }
  }
};

/// Desk-scale synthetic corpus used by the `synthetic` profile.
inline SynthSpec default_synth_spec() {
  SynthSpec s;
  s.num_classes = 4;
  s.classes_per_video = 1;
  s.t_min = 120;
  s.t_max = 200;
  s.instances_min = 2;
  s.instances_max = 4;
  s.len_min = 8;
  s.len_max = 30;
  s.gap_min = 4;
  s.gap_max = 20;
  s.activation = 0.9;
  s.background = 0.05;
  s.noise = 0.08;
  s.dip_prob = 0.5;
  s.dip_level = 0.3;
  s.bridge_prob = 0.3;
  s.bridge_level = 0.6;
  s.fps = 30.0;
  s.feature_dim = 16;
  s.feature_noise = 0.3;
  return s;
}

inline RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == "thumos") {
    c.anchors.scales = {1, 2, 4, 8, 16, 32};
    c.sgd.lr_step = 200;
    c.eval_profile = "thumos";
  } else if (profile == "activitynet") {
    c.anchors.scales = {16, 32, 64, 128, 256, 512};
    c.sgd.lr_step = 500;
    c.eval_profile = "activitynet";
  } else if (profile == "synthetic") {
    c.anchors.scales = {1, 2, 4, 8, 16, 32};
    c.sgd.lr_step = 200;
    c.eval_profile = "thumos";
    c.att_threshold.reset();
    c.synth = default_synth_spec();
    c.feature_dim = c.synth->feature_dim;
    c.hidden = 32;
    c.sgd.lr = 1e-5;
  } else {
    throw ConfigError("unknown profile '" + profile + "' (thumos|activitynet|synthetic)");
  }
  return c;
}

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline SynthSpec parse_synth_spec(const nlohmann::json& j, SynthSpec base = {}) {
  using detail::read_opt;
  static const std::set<std::string> known{
      "num_videos", "num_classes", "classes_per_video", "t_min", "t_max", "instances_min",
      "instances_max", "len_min", "len_max", "gap_min", "gap_max", "activation", "background",
      "noise", "dip_prob", "dip_level", "bridge_prob", "bridge_level", "fps", "feature_dim",
      "feature_noise"};
  const std::string where = "synth spec";
  detail::reject_unknown(j, known, where);
  SynthSpec s = base;
  read_opt(j, "num_videos", s.num_videos, where);
  read_opt(j, "num_classes", s.num_classes, where);
  read_opt(j, "classes_per_video", s.classes_per_video, where);
  read_opt(j, "t_min", s.t_min, where);
  read_opt(j, "t_max", s.t_max, where);
  read_opt(j, "instances_min", s.instances_min, where);
  read_opt(j, "instances_max", s.instances_max, where);
  read_opt(j, "len_min", s.len_min, where);
  read_opt(j, "len_max", s.len_max, where);
  read_opt(j, "gap_min", s.gap_min, where);
  read_opt(j, "gap_max", s.gap_max, where);
  read_opt(j, "activation", s.activation, where);
  read_opt(j, "background", s.background, where);
  read_opt(j, "noise", s.noise, where);
  read_opt(j, "dip_prob", s.dip_prob, where);
  read_opt(j, "dip_level", s.dip_level, where);
  read_opt(j, "bridge_prob", s.bridge_prob, where);
  read_opt(j, "bridge_level", s.bridge_level, where);
  read_opt(j, "fps", s.fps, where);
  read_opt(j, "feature_dim", s.feature_dim, where);
  read_opt(j, "feature_noise", s.feature_noise, where);
  return s;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  return {{"num_videos", s.num_videos},       {"num_classes", s.num_classes},
          {"classes_per_video", s.classes_per_video},
          {"t_min", s.t_min},                 {"t_max", s.t_max},
          {"instances_min", s.instances_min}, {"instances_max", s.instances_max},
          {"len_min", s.len_min},             {"len_max", s.len_max},
          {"gap_min", s.gap_min},             {"gap_max", s.gap_max},
          {"activation", s.activation},       {"background", s.background},
          {"noise", s.noise},                 {"dip_prob", s.dip_prob},
          {"dip_level", s.dip_level},         {"bridge_prob", s.bridge_prob},
          {"bridge_level", s.bridge_level},   {"fps", s.fps},
          {"feature_dim", s.feature_dim},     {"feature_noise", s.feature_noise}};
}

/// Parse a run config. `profile` (default thumos) selects the base values;
/// unknown keys are errors.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  using detail::read_opt;
  static const std::set<std::string> known{
      "version",        "profile",         "anchors",         "alpha",
      "act_min",        "loss_max",        "nms_iou",         "att_threshold",
      "lr",             "lr_step",         "momentum",        "weight_decay",
      "epochs",         "feature_dim",     "hidden",          "seed",
      "train_loss",     "direct_opt_iters", "threshold_tau",  "threshold_taus",
      "enum_max_len",   "alpha_sweep",     "eval_profile",    "ap_mode",
      "train_manifest", "test_manifest",   "synth",           "synth_train_videos",
      "synth_test_videos"};
  const std::string where = "run config";
  detail::reject_unknown(j, known, where);
  if (!j.contains("version")) throw ConfigError("run config needs a 'version' key");

  std::string profile = "thumos";
  read_opt(j, "profile", profile, where);
  RunConfig c = profile_defaults(profile);
  read_opt(j, "version", c.version, where);
  read_opt(j, "anchors", c.anchors.scales, where);
  read_opt(j, "alpha", c.alpha, where);
  read_opt(j, "act_min", c.selection.act_min, where);
  read_opt(j, "loss_max", c.selection.loss_max, where);
  read_opt(j, "nms_iou", c.selection.nms_iou, where);
  if (j.contains("att_threshold")) {
    if (j.at("att_threshold").is_null())
      c.att_threshold.reset();
    else {
      double v = 0.0;
      read_opt(j, "att_threshold", v, where);
      c.att_threshold = v;
    }
  }
  read_opt(j, "lr", c.sgd.lr, where);
  read_opt(j, "lr_step", c.sgd.lr_step, where);
  read_opt(j, "momentum", c.sgd.momentum, where);
  read_opt(j, "weight_decay", c.sgd.weight_decay, where);
  read_opt(j, "epochs", c.epochs, where);
  read_opt(j, "feature_dim", c.feature_dim, where);
  read_opt(j, "hidden", c.hidden, where);
  read_opt(j, "seed", c.seed, where);
  if (j.contains("train_loss")) {
    std::string s;
    read_opt(j, "train_loss", s, where);
    if (s == "oic")
      c.train_loss = LossKind::Oic;
    else if (s == "inner_only")
      c.train_loss = LossKind::InnerOnly;
    else
      throw ConfigError("train_loss must be 'oic' or 'inner_only'");
  }
  read_opt(j, "direct_opt_iters", c.direct_opt_iters, where);
  read_opt(j, "threshold_tau", c.threshold_tau, where);
  read_opt(j, "threshold_taus", c.threshold_taus, where);
  read_opt(j, "enum_max_len", c.enum_max_len, where);
  read_opt(j, "alpha_sweep", c.alpha_sweep, where);
  read_opt(j, "eval_profile", c.eval_profile, where);
  if (j.contains("ap_mode")) {
    std::string s;
    read_opt(j, "ap_mode", s, where);
    if (s == "envelope")
      c.ap_mode = ApMode::Envelope;
    else if (s == "eleven_point")
      c.ap_mode = ApMode::ElevenPoint;
    else
      throw ConfigError("ap_mode must be 'envelope' or 'eleven_point'");
  }
  read_opt(j, "train_manifest", c.train_manifest, where);
  read_opt(j, "test_manifest", c.test_manifest, where);
  if (j.contains("synth")) c.synth = parse_synth_spec(j.at("synth"), c.synth.value_or(SynthSpec{}));
  read_opt(j, "synth_train_videos", c.synth_train_videos, where);
  read_opt(j, "synth_test_videos", c.synth_test_videos, where);
  if (c.synth && !j.contains("feature_dim")) c.feature_dim = c.synth->feature_dim;
  c.validate();
  return c;
}

}  // namespace oicloc
