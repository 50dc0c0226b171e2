// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "oicloc/boundary.hpp"
#include "oicloc/cas.hpp"
#include "oicloc/config.hpp"
#include "oicloc/oic.hpp"
#include "oicloc/pipeline.hpp"
#include "oicloc/selection.hpp"

namespace oicloc {

/// Maximal runs of snippets with activation >= tau. Each run [s, e] covers
/// the frames of snippets s..e; its score is the mean activation.
inline std::vector<Prediction> threshold_localize(const Cas& cas, ClassId k, double tau, double fps,
                                                  const std::string& video_id = {}) {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("threshold must lie in (0, 1)");
  std::vector<Prediction> out;
  const int T = cas.length();
  int t = 1;
  while (t <= T) {
    if (!(cas.at(k, t) >= tau)) {
      ++t;
      continue;
    }
    const int s = t;
    while (t <= T && cas.at(k, t) >= tau) ++t;
    const int e = t - 1;
    Prediction p;
    p.video_id = video_id;
    p.cls = k;
    p.score = cas.sum(k, s, e) / static_cast<double>(e - s + 1);
    p.loss = 1.0 - p.score;
    p.start_s = snippet_to_time(s, fps);
    p.end_s = snippet_to_time(e + 1, fps);
    p.hyp = {static_cast<double>(s), static_cast<double>(e), static_cast<double>(s),
             static_cast<double>(e), k};
    out.push_back(p);
  }
  return out;
}

inline std::vector<Prediction> threshold_localize_video(const VideoRecord& v, double tau) {
  std::vector<Prediction> out;
  for (ClassId k = 1; k <= v.cas.num_classes(); ++k) {
    auto p = threshold_localize(v.cas, k, tau, v.fps, v.video_id);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

/// Exhaustive OIC scoring of every integer segment up to `max_len` snippets
/// (0 means no cap), followed by the same loss filter and NMS as select().
/// The inflation length of segment [x1, x2] is its snippet count.
inline std::vector<Prediction> oic_selection_enumerate(const Cas& cas, ClassId k, int max_len,
                                                       double alpha, double loss_max, double nms_iou,
                                                       double fps, const std::string& video_id = {}) {
  const int T = cas.length();
  if (max_len > T) throw InputError("max_len exceeds video length");
  const int cap = max_len <= 0 ? T : max_len;
  std::vector<Prediction> cands;
  for (int x1 = 1; x1 <= T; ++x1) {
    for (int x2 = x1; x2 <= T && x2 - x1 + 1 <= cap; ++x2) {
      const double w = x2 - x1 + 1;
      const OuterBoundary o = inflate(x1, x2, w, alpha, T);
      const SegmentHypothesis h{static_cast<double>(x1), static_cast<double>(x2), o.X1, o.X2, k};
      const double loss = oic_forward(cas, h).loss;
      if (loss > loss_max) continue;
      Prediction p;
      p.video_id = video_id;
      p.cls = k;
      p.loss = loss;
      p.score = 1.0 - loss;
      p.hyp = h;
      p.start_s = snippet_to_time(x1, fps);
      p.end_s = snippet_to_time(x2, fps);
      cands.push_back(p);
    }
  }
  return nms(cands, nms_iou);
}

inline std::vector<Prediction> oic_selection_video(const VideoRecord& v, const RunConfig& cfg) {
  std::vector<Prediction> out;
  const int max_len = cfg.enum_max_len > 0 ? std::min(cfg.enum_max_len, v.length()) : 0;
  for (ClassId k = 1; k <= v.cas.num_classes(); ++k) {
    auto p = oic_selection_enumerate(v.cas, k, max_len, cfg.alpha, cfg.selection.loss_max,
                                     cfg.selection.nms_iou, v.fps, v.video_id);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

/// FNV-1a, used to derive a stable per-video seed.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Fit a fresh regressor to one test video alone, using all classes, then
/// report the selection of the fitted network on that video.
inline std::vector<Prediction> direct_optimize(const VideoRecord& video, const RunConfig& cfg) {
  RunConfig local = cfg;
  local.seed = cfg.seed ^ stable_hash(video.video_id);
  local.train_loss = LossKind::Oic;
  TrainState state = fresh_state(local);
  const std::set<ClassId> classes = all_classes(video.cas);
  for (int i = 0; i < cfg.direct_opt_iters; ++i) train_step(state, video, local, classes);
  // The batch is this video, so the fitted network is read out in train mode.
  return predict_video(state.net, video, local, Mode::Train, LossKind::Oic, local.alpha);
}

/// Training with the inner-only loss substituted for the OIC loss.
inline TrainState train_inner_only(const std::vector<VideoRecord>& corpus, const RunConfig& cfg,
                                   const StepCallback& on_step = {}) {
  RunConfig local = cfg;
  local.train_loss = LossKind::InnerOnly;
  TrainState state = fresh_state(local);
  train(state, corpus, local, on_step);
  return state;
}

inline std::vector<Prediction> predict_inner_only(const NetworkB& net, const VideoRecord& video,
                                                  const RunConfig& cfg) {
  return predict_video(net, video, cfg, Mode::Infer, LossKind::InnerOnly, cfg.alpha);
}

}  // namespace oicloc
