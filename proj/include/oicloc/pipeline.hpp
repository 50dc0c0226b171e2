// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "oicloc/cas.hpp"
#include "oicloc/config.hpp"
#include "oicloc/regressor.hpp"
#include "oicloc/selection.hpp"

namespace oicloc {

/// Regressor input for a video: its features, or the CAS when none were given.
inline const FeatureMap& features_of(const VideoRecord& v) {
  return v.features.empty() ? v.cas.activations() : v.features;
}

inline std::set<ClassId> all_classes(const Cas& cas) {
  std::set<ClassId> s;
  for (ClassId k = 1; k <= cas.num_classes(); ++k) s.insert(k);
  return s;
}

struct StepLog {
  long iteration = 0;
  std::string video_id;
  double loss = 0.0;
  std::size_t kept = 0;
  double lr = 0.0;
};

/// Network plus optimizer state: everything a checkpoint holds.
struct TrainState {
  NetworkB net;
  SgdOptimizer opt;
};

inline TrainState fresh_state(const RunConfig& cfg) {
  TrainState s{NetworkB(cfg.network()), SgdOptimizer(cfg.sgd)};
  s.net.initialize(cfg.seed);
  return s;
}

/// One optimizer step on one video: forward, candidates, selection on
/// `classes`, loss, backward, update.
inline StepLog train_step(TrainState& state, const VideoRecord& video, const RunConfig& cfg,
                          const std::set<ClassId>& classes) {
  ForwardResult fwd = state.net.forward(features_of(video), Mode::Train);
  const CandidateGrid grid = build_candidates(fwd.out, cfg.anchors, video.length(), cfg.alpha);
  SelectionParams sp = cfg.selection;
  sp.loss = cfg.train_loss;
  const SelectionResult sel = select(video.cas, grid, classes, sp, video.fps);
  const TrainingLoss tl = training_loss(video.cas, grid, sel.mask, cfg.train_loss);
  const ParamGrads grads = state.net.backward(fwd.cache, tl.grad_out);
  state.net.absorb_batch_stats(fwd.cache);
  StepLog log{state.opt.iteration(), video.video_id, tl.total, sel.kept.size(), state.opt.current_rate()};
  state.opt.step(state.net, grads);
  return log;
}

using StepCallback = std::function<void(const StepLog&)>;

/// Weakly supervised training: one video per step, ground-truth labels as the
/// class set, `cfg.epochs` passes in corpus order. Resumes from
/// state.opt.iteration(); stops early after `max_iterations` total steps when
/// non-negative.
inline void train(TrainState& state, const std::vector<VideoRecord>& corpus, const RunConfig& cfg,
                  const StepCallback& on_step = {}, long max_iterations = -1) {
  if (corpus.empty()) throw ConfigError("training corpus is empty");
  const long n = static_cast<long>(corpus.size());
  const long total = static_cast<long>(cfg.epochs) * n;
  const long stop = max_iterations >= 0 ? std::min(total, max_iterations) : total;
  for (long it = state.opt.iteration(); it < stop; ++it) {
    const VideoRecord& v = corpus[static_cast<std::size_t>(it % n)];
    const StepLog log = train_step(state, v, cfg, v.labels);
    if (on_step) on_step(log);
  }
}

inline std::vector<Prediction> predict_video(const NetworkB& net, const VideoRecord& video,
                                             const RunConfig& cfg, Mode mode, LossKind loss,
                                             double alpha) {
  const ForwardResult fwd = net.forward(features_of(video), mode);
  const CandidateGrid grid = build_candidates(fwd.out, cfg.anchors, video.length(), alpha);
  SelectionParams sp = cfg.selection;
  sp.loss = loss;
  return predictions_of(select(video.cas, grid, all_classes(video.cas), sp, video.fps), video.video_id);
}

/// Test-time inference with a trained regressor: one infer-mode forward, all
/// classes considered.
inline std::vector<Prediction> predict_autoloc(const NetworkB& net, const VideoRecord& video,
                                               const RunConfig& cfg) {
  return predict_video(net, video, cfg, Mode::Infer, LossKind::Oic, cfg.alpha);
}

}  // namespace oicloc
