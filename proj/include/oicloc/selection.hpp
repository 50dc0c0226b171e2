// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "oicloc/boundary.hpp"
#include "oicloc/cas.hpp"
#include "oicloc/oic.hpp"
#include "oicloc/regressor.hpp"

namespace oicloc {

inline double snippet_to_time(double x, double fps) {
  if (!(fps > 0.0)) throw InputError("fps must be positive");
  return (x - 1.0) * kFramesPerSnippet / fps;
}

struct Prediction {
  std::string video_id;
  ClassId cls = 1;
  double start_s = 0.0;
  double end_s = 0.0;
  double score = 0.0;  // 1 - loss
  double loss = 0.0;
  SegmentHypothesis hyp;  // snippet coordinates, kept for diagnostics
};

/// Overlap of two closed real intervals divided by their union.
inline double interval_iou(double a1, double a2, double b1, double b2) {
  const double inter = std::max(0.0, std::min(a2, b2) - std::max(a1, b1));
  const double uni = std::max(a2, b2) - std::min(a1, b1);
  if (uni <= 0.0) return (a1 == b1 && a2 == b2) ? 1.0 : 0.0;
  return inter / uni;
}

/// Which per-segment loss drives selection and training.
enum class LossKind { Oic, InnerOnly };

inline double segment_loss(const Cas& cas, const SegmentHypothesis& h, LossKind kind) {
  return kind == LossKind::Oic ? oic_forward(cas, h).loss : inner_only_forward(cas, h);
}

inline BoundaryGradients segment_gradients(const Cas& cas, const SegmentHypothesis& h,
                                           LossKind kind) {
  return kind == LossKind::Oic ? oic_backward(cas, h) : inner_only_backward(cas, h);
}

namespace detail {

// Score descending, then earlier start, then the stable input order.
inline bool ranks_before(const Prediction& a, const Prediction& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.hyp.x1 < b.hyp.x1;
}

// Greedy suppression on inner snippet boundaries; returns surviving indices
// in rank order.
inline std::vector<std::size_t> nms_order(const std::vector<Prediction>& preds, double iou_thresh) {
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(preds[a], preds[b]);
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t j : kept) {
      if (interval_iou(preds[i].hyp.x1, preds[i].hyp.x2, preds[j].hyp.x1, preds[j].hyp.x2) >
          iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(i);
  }
  return kept;
}

}  // namespace detail

/// Greedy NMS over same-class predictions, highest score first.
inline std::vector<Prediction> nms(const std::vector<Prediction>& preds, double iou_thresh) {
  std::vector<Prediction> out;
  for (std::size_t i : detail::nms_order(preds, iou_thresh)) out.push_back(preds[i]);
  return out;
}

/// T x M class-agnostic candidates predicted by the regressor.
struct CandidateGrid {
  int length = 0;
  AnchorConfig anchors;
  double alpha = 0.25;
  std::vector<TransformedAnchor> cells;  // index (t - 1) * M + m
  std::vector<RegressionPair> regression;

  std::size_t num_anchors() const { return anchors.size(); }
  const TransformedAnchor& at(int t, std::size_t m) const {
    return cells[static_cast<std::size_t>(t - 1) * num_anchors() + m];
  }
  const RegressionPair& regression_at(int t, std::size_t m) const {
    return regression[static_cast<std::size_t>(t - 1) * num_anchors() + m];
  }
};

inline CandidateGrid build_candidates(const RegressionMap& reg, const AnchorConfig& anchors, int T,
                                      double alpha) {
  anchors.validate();
  const std::size_t M = anchors.size();
  if (reg.rows() != 2 * M || static_cast<int>(reg.cols()) != T)
    throw InputError("regression map shape does not match anchors x T");
  CandidateGrid grid;
  grid.length = T;
  grid.anchors = anchors;
  grid.alpha = alpha;
  grid.cells.reserve(static_cast<std::size_t>(T) * M);
  grid.regression.reserve(static_cast<std::size_t>(T) * M);
  for (int t = 1; t <= T; ++t) {
    for (std::size_t m = 0; m < M; ++m) {
      const RegressionPair r{reg(2 * m, static_cast<std::size_t>(t - 1)),
                             reg(2 * m + 1, static_cast<std::size_t>(t - 1))};
      grid.regression.push_back(r);
      grid.cells.push_back(transform_anchor(t, anchors.scales[m], r, alpha, T));
    }
  }
  return grid;
}

/// K x T x M keep flags.
class SelectionMask {
 public:
  SelectionMask() = default;
  SelectionMask(int K, int T, std::size_t M)
      : K_(K), T_(T), M_(M), bits_(static_cast<std::size_t>(K) * static_cast<std::size_t>(T) * M, 0) {}

  bool get(ClassId k, int t, std::size_t m) const { return bits_[index(k, t, m)] != 0; }
  void set(ClassId k, int t, std::size_t m, bool v) { bits_[index(k, t, m)] = v ? 1 : 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  int num_classes() const { return K_; }
  int length() const { return T_; }
  std::size_t num_anchors() const { return M_; }

  friend bool operator==(const SelectionMask&, const SelectionMask&) = default;

 private:
  std::size_t index(ClassId k, int t, std::size_t m) const {
    return (static_cast<std::size_t>(k - 1) * static_cast<std::size_t>(T_) +
            static_cast<std::size_t>(t - 1)) * M_ + m;
  }

  int K_ = 0;
  int T_ = 0;
  std::size_t M_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct SelectionParams {
  double act_min = 0.1;
  double loss_max = -0.3;
  double nms_iou = 0.4;
  LossKind loss = LossKind::Oic;
};

struct KeptSegment {
  Prediction pred;
  int position = 0;       // t, 1-based
  std::size_t anchor = 0;  // m, 0-based
};

struct SelectionResult {
  SelectionMask mask;
  std::vector<KeptSegment> kept;  // grouped by class, rank order within class
};

/// The OIC layer: per class, pick the lowest-loss anchor at every position
/// with enough activation, drop weak ones, then suppress overlaps.
inline SelectionResult select(const Cas& cas, const CandidateGrid& grid,
                              const std::set<ClassId>& classes, const SelectionParams& params,
                              double fps) {
  const int T = grid.length;
  if (cas.length() != T) throw InputError("candidate grid length does not match CAS");
  const std::size_t M = grid.num_anchors();
  SelectionResult res{SelectionMask(cas.num_classes(), T, M), {}};

  for (ClassId k : classes) {
    if (k < 1 || k > cas.num_classes()) throw InputError("class outside 1..K");
    std::vector<KeptSegment> cands;
    for (int t = 1; t <= T; ++t) {
      if (!(cas.at(k, t) >= params.act_min)) continue;
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_m = M;
      for (std::size_t m = 0; m < M; ++m) {
        const TransformedAnchor& a = grid.at(t, m);
        // zero-length inners cannot become a valid time interval
        if (a.degenerate || !(a.x2 > a.x1)) continue;
        const double l = segment_loss(cas, a.hypothesis(k), params.loss);
        if (l < best) {
          best = l;
          best_m = m;
        }
      }
      if (best_m == M || best > params.loss_max) continue;
      const TransformedAnchor& a = grid.at(t, best_m);
      KeptSegment ks;
      ks.position = t;
      ks.anchor = best_m;
      ks.pred.cls = k;
      ks.pred.loss = best;
      ks.pred.score = 1.0 - best;
      ks.pred.hyp = a.hypothesis(k);
      ks.pred.start_s = snippet_to_time(a.x1, fps);
      ks.pred.end_s = snippet_to_time(a.x2, fps);
      cands.push_back(ks);
    }
    std::vector<Prediction> preds;
    preds.reserve(cands.size());
    for (const auto& c : cands) preds.push_back(c.pred);
    for (std::size_t i : detail::nms_order(preds, params.nms_iou)) {
      res.mask.set(k, cands[i].position, cands[i].anchor, true);
      res.kept.push_back(cands[i]);
    }
  }
  return res;
}

struct TrainingLoss {
  double total = 0.0;
  RegressionMap grad_out;  // 2M x T
};

/// Sum of the kept segments' losses and the gradient it sends into the
/// regression map. Unkept slots receive zero.
inline TrainingLoss training_loss(const Cas& cas, const CandidateGrid& grid,
                                  const SelectionMask& mask, LossKind kind = LossKind::Oic) {
  const std::size_t M = grid.num_anchors();
  const int T = grid.length;
  TrainingLoss out{0.0, RegressionMap(2 * M, static_cast<std::size_t>(T), 0.0)};
  for (ClassId k = 1; k <= mask.num_classes(); ++k) {
    for (int t = 1; t <= T; ++t) {
      for (std::size_t m = 0; m < M; ++m) {
        if (!mask.get(k, t, m)) continue;
        const TransformedAnchor& a = grid.at(t, m);
        const SegmentHypothesis h = a.hypothesis(k);
        out.total += segment_loss(cas, h, kind);
        const BoundaryGradients g = segment_gradients(cas, h, kind);
        const RegressionGradient rg = transform_backward(g, t, grid.anchors.scales[m],
                                                         grid.regression_at(t, m), grid.alpha,
                                                         a.state);
        out.grad_out(2 * m, static_cast<std::size_t>(t - 1)) += rg.d_tx;
        out.grad_out(2 * m + 1, static_cast<std::size_t>(t - 1)) += rg.d_tw;
      }
    }
  }
  return out;
}

inline std::vector<Prediction> predictions_of(const SelectionResult& sel, const std::string& video_id) {
  std::vector<Prediction> out;
  out.reserve(sel.kept.size());
  for (const auto& k : sel.kept) {
    Prediction p = k.pred;
    p.video_id = video_id;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace oicloc
