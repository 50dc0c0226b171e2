// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oicloc/cas.hpp"
#include "oicloc/error.hpp"
#include "oicloc/selection.hpp"

namespace oicloc {

struct TimeInterval {
  double start = 0.0;
  double end = 0.0;
};

inline double iou(TimeInterval a, TimeInterval b) { return interval_iou(a.start, a.end, b.start, b.end); }

/// A ground-truth segment tagged with the video it belongs to.
struct VideoSegment {
  std::string video_id;
  GroundTruthSegment seg;
};

inline std::vector<VideoSegment> collect_ground_truth(const std::vector<VideoRecord>& videos) {
  std::vector<VideoSegment> out;
  for (const auto& v : videos)
    for (const auto& g : v.gt) out.push_back({v.video_id, g});
  return out;
}

// envelope: area under the monotone precision envelope over all recall points.
// eleven_point: mean interpolated precision at recall 0, 0.1, ..., 1.
enum class ApMode { Envelope, ElevenPoint };

/// Ranking used for evaluation and for prediction files: score descending,
/// then earlier start, then video id and class for a total order.
inline bool eval_rank_before(const Prediction& a, const Prediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start_s != b.start_s) return a.start_s < b.start_s;
  if (a.video_id != b.video_id) return a.video_id < b.video_id;
  return a.cls < b.cls;
}

inline void sort_for_eval(std::vector<Prediction>& preds) {
  std::stable_sort(preds.begin(), preds.end(), eval_rank_before);
}

/// True-positive flags of `preds` (already filtered to one class and ranked)
/// against that class's ground truth. Each ground-truth segment can be claimed
/// once; a prediction claims the highest-IoU unclaimed segment of its video
/// and counts only if that IoU exceeds the threshold.
inline std::vector<bool> match_detections(const std::vector<Prediction>& preds,
                                          const std::vector<VideoSegment>& gts, double iou_thresh) {
  std::map<std::string, std::vector<std::size_t>> by_video;
  for (std::size_t i = 0; i < gts.size(); ++i) by_video[gts[i].video_id].push_back(i);
  std::vector<bool> claimed(gts.size(), false), tp(preds.size(), false);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    auto it = by_video.find(preds[p].video_id);
    if (it == by_video.end()) continue;
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g : it->second) {
      if (claimed[g]) continue;
      const double o = iou({preds[p].start_s, preds[p].end_s}, {gts[g].seg.start_s, gts[g].seg.end_s});
      if (o > best) {
        best = o;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best > iou_thresh) {
      claimed[best_g] = true;
      tp[p] = true;
    }
  }
  return tp;
}

inline double ap_from_flags(const std::vector<bool>& tp, std::size_t num_gt, ApMode mode) {
  std::vector<double> precision, recall;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i]) ++hits;
    precision.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(hits) / static_cast<double>(num_gt));
  }
  if (mode == ApMode::ElevenPoint) {
    double s = 0.0;
    for (int j = 0; j <= 10; ++j) {
      const double r = j / 10.0;
      double best = 0.0;
      for (std::size_t i = 0; i < recall.size(); ++i)
        if (recall[i] >= r) best = std::max(best, precision[i]);
      s += best;
    }
    return s / 11.0;
  }
  // precision envelope, right to left
  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

/// AP of one class at one IoU threshold; nullopt if the class has no
/// ground truth.
inline std::optional<double> average_precision(const std::vector<Prediction>& preds,
                                               const std::vector<VideoSegment>& gts, ClassId cls,
                                               double iou_thresh, ApMode mode = ApMode::Envelope) {
  std::vector<VideoSegment> class_gt;
  for (const auto& g : gts)
    if (g.seg.cls == cls) class_gt.push_back(g);
  if (class_gt.empty()) return std::nullopt;
  std::vector<Prediction> class_preds;
  for (const auto& p : preds)
    if (p.cls == cls) class_preds.push_back(p);
  sort_for_eval(class_preds);
  return ap_from_flags(match_detections(class_preds, class_gt, iou_thresh), class_gt.size(), mode);
}

struct ThresholdResult {
  double threshold = 0.0;
  std::map<ClassId, double> ap;
  double map = 0.0;
};

struct EvalReport {
  std::vector<ThresholdResult> rows;
  double avg_map = 0.0;

  double map_at(double threshold) const {
    for (const auto& r : rows)
      if (std::abs(r.threshold - threshold) < 1e-9) return r.map;
    throw InputError("threshold not in report");
  }
};

inline std::vector<double> thumos_thresholds() { return {0.3, 0.4, 0.5, 0.6, 0.7}; }

inline std::vector<double> activitynet_thresholds() {
  std::vector<double> t;
  for (int i = 50; i <= 95; i += 5) t.push_back(i / 100.0);
  return t;
}

inline std::vector<double> thresholds_for_profile(const std::string& profile) {
  if (profile == "thumos") return thumos_thresholds();
  if (profile == "activitynet") return activitynet_thresholds();
  throw InputError("unknown evaluation profile '" + profile + "' (thumos|activitynet)");
}

inline EvalReport map_report(const std::vector<Prediction>& preds, const std::vector<VideoSegment>& gts,
                             const std::vector<double>& thresholds, ApMode mode = ApMode::Envelope) {
  if (gts.empty()) throw InputError("evaluation needs at least one ground-truth segment");
  std::set<ClassId> classes;
  for (const auto& g : gts) classes.insert(g.seg.cls);

  // Group once; each class is ranked once and re-matched per threshold.
  std::map<ClassId, std::vector<Prediction>> preds_by_class;
  std::map<ClassId, std::vector<VideoSegment>> gts_by_class;
  for (const auto& p : preds)
    if (classes.count(p.cls)) preds_by_class[p.cls].push_back(p);
  for (const auto& g : gts) gts_by_class[g.seg.cls].push_back(g);
  for (auto& [k, v] : preds_by_class) sort_for_eval(v);

  EvalReport report;
  for (double th : thresholds) {
    ThresholdResult row;
    row.threshold = th;
    double sum = 0.0;
    for (ClassId k : classes) {
      const auto& cg = gts_by_class[k];
      const auto& cp = preds_by_class[k];
      const double ap = ap_from_flags(match_detections(cp, cg, th), cg.size(), mode);
      row.ap[k] = ap;
      sum += ap;
    }
    row.map = sum / static_cast<double>(classes.size());
    report.rows.push_back(std::move(row));
  }
  double s = 0.0;
  for (const auto& r : report.rows) s += r.map;
  report.avg_map = report.rows.empty() ? 0.0 : s / static_cast<double>(report.rows.size());
  return report;
}

}  // namespace oicloc
