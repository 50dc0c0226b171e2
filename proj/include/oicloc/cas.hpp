// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oicloc/error.hpp"
#include "oicloc/matrix.hpp"

namespace oicloc {

// Class ids and snippet indices are 1-based everywhere in the public API.
using ClassId = int;

constexpr int kFramesPerSnippet = 15;

/// Raw per-snippet classification scores, K rows by T columns.
struct ClassScores {
  MatrixD scores;

  std::size_t num_classes() const { return scores.rows(); }
  std::size_t length() const { return scores.cols(); }
};

struct AttentionSeq {
  std::vector<double> att;
};

/// Class activation sequence: K x T activations in [0, 1].
///
/// Lookups use a zero-padded grid, so snippet 0 and snippet T+1 exist and
/// carry activation 0. Per-class prefix sums over the padded grid make
/// interval sums O(1).
class Cas {
 public:
  Cas() = default;

  explicit Cas(MatrixD act) : act_(std::move(act)) {
    if (act_.rows() < 1 || act_.cols() < 1)
      throw InputError("CAS needs K >= 1 and T >= 1");
    for (double v : act_.data()) {
      if (!(v >= 0.0 && v <= 1.0))
        throw InputError("CAS activation outside [0, 1]: " + std::to_string(v));
    }
    build_prefix();
  }

  static Cas clamped(MatrixD act) {
    for (double& v : act.data()) {
      if (!std::isfinite(v)) throw InputError("non-finite activation");
      v = std::clamp(v, 0.0, 1.0);
    }
    return Cas(std::move(act));
  }

  int num_classes() const { return static_cast<int>(act_.rows()); }
  int length() const { return static_cast<int>(act_.cols()); }

  /// f_k(x) on the padded grid; x outside [1, T] reads as zero.
  double at(ClassId k, long x) const {
    if (x < 1 || x > length()) return 0.0;
    return act_(static_cast<std::size_t>(k - 1), static_cast<std::size_t>(x - 1));
  }

  /// Inclusive sum over padded positions [a, b], both within [0, T+1].
  double sum(ClassId k, long a, long b) const {
    if (b < a) return 0.0;
    const auto& p = prefix_[static_cast<std::size_t>(k - 1)];
    return p[static_cast<std::size_t>(b + 1)] - p[static_cast<std::size_t>(a)];
  }

  std::span<const double> track(ClassId k) const {
    return act_.row(static_cast<std::size_t>(k - 1));
  }

  const MatrixD& activations() const { return act_; }

  friend bool operator==(const Cas& a, const Cas& b) { return a.act_ == b.act_; }

 private:
  void build_prefix() {
    const std::size_t T = act_.cols();
    prefix_.assign(act_.rows(), std::vector<double>(T + 3, 0.0));
    for (std::size_t k = 0; k < act_.rows(); ++k) {
      auto& p = prefix_[k];
      // padded position u in [0, T+1] lives at p[u+1]
      for (std::size_t u = 0; u <= T + 1; ++u) {
        const double f = (u >= 1 && u <= T) ? act_(k, u - 1) : 0.0;
        p[u + 1] = p[u] + f;
      }
    }
  }

  MatrixD act_;
  std::vector<std::vector<double>> prefix_;
};

struct GroundTruthSegment {
  ClassId cls = 1;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const GroundTruthSegment&, const GroundTruthSegment&) = default;
};

struct VideoRecord {
  std::string video_id;
  Cas cas;
  std::set<ClassId> labels;
  double fps = 30.0;
  std::vector<GroundTruthSegment> gt;
  // D x T features for the boundary regressor. Empty means the CAS itself
  // is used as the feature map.
  MatrixD features;

  int length() const { return cas.length(); }

  void validate() const {
    if (!(fps > 0.0)) throw InputError(video_id + ": fps must be positive");
    for (ClassId k : labels) {
      if (k < 1 || k > cas.num_classes())
        throw InputError(video_id + ": label " + std::to_string(k) + " outside 1..K");
    }
    for (const auto& g : gt) {
      if (!(g.start_s >= 0.0 && g.start_s < g.end_s))
        throw InputError(video_id + ": ground truth needs 0 <= start < end");
    }
    if (!features.empty() && features.cols() != cas.activations().cols())
      throw InputError(video_id + ": feature length does not match CAS length");
  }
};

/// Zeroes every snippet whose attention is below `att_threshold`, then clamps
/// into [0, 1]. Pass -infinity to disable the gate.
inline Cas gate_attention(const ClassScores& scores, const AttentionSeq& att,
                          double att_threshold) {
  const std::size_t K = scores.num_classes(), T = scores.length();
  if (att.att.size() != T)
    throw InputError("attention length " + std::to_string(att.att.size()) +
                     " does not match T=" + std::to_string(T));
  MatrixD out(K, T);
  for (std::size_t t = 0; t < T; ++t) {
    if (!std::isfinite(att.att[t])) throw InputError("non-finite attention score");
    const bool keep = att.att[t] >= att_threshold;
    for (std::size_t k = 0; k < K; ++k) {
      const double v = scores.scores(k, t);
      if (!std::isfinite(v)) throw InputError("non-finite classification score");
      out(k, t) = keep ? std::clamp(v, 0.0, 1.0) : 0.0;
    }
  }
  return Cas(std::move(out));
}

// ---------------------------------------------------------------------------
// Synthetic corpus.
//
// Each video carries planted instances: rectangular plateaus of the video's
// class on top of a noisy background. Two perturbations reproduce the
// thresholding failure modes: a dip (low-activation notch inside an
// instance) and a bridge (elevated activation in the gap between two
// consecutive instances). Features are a fixed random projection of the
// clean latent (in-instance indicator plus class one-hot) with Gaussian
// noise, so they carry none of the dip/bridge corruption.

struct SynthSpec {
  int num_videos = 1;
  int num_classes = 1;
  int classes_per_video = 1;
  int t_min = 100;
  int t_max = 100;
  int instances_min = 1;
  int instances_max = 1;
  int len_min = 20;
  int len_max = 20;
  int gap_min = 4;
  int gap_max = 30;
  double activation = 0.9;
  double background = 0.0;
  double noise = 0.0;
  double dip_prob = 0.0;
  double dip_level = 0.3;
  double bridge_prob = 0.0;
  double bridge_level = 0.6;
  double fps = 30.0;
  int feature_dim = 16;
  double feature_noise = 0.1;

  void validate() const {
    auto range = [](int lo, int hi, int floor, const char* name) {
      if (lo < floor || hi < lo)
        throw InputError(std::string("synth spec: empty or invalid range for ") + name);
    };
    range(num_videos, num_videos, 0, "num_videos");
    range(num_classes, num_classes, 1, "num_classes");
    range(classes_per_video, num_classes, 1, "classes_per_video");
    range(t_min, t_max, 1, "t");
    range(instances_min, instances_max, 0, "instances");
    range(len_min, len_max, 1, "len");
    range(gap_min, gap_max, 1, "gap");
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0))
        throw InputError(std::string("synth spec: ") + name + " must lie in [0, 1]");
    };
    unit(activation, "activation");
    unit(background, "background");
    unit(dip_prob, "dip_prob");
    unit(dip_level, "dip_level");
    unit(bridge_prob, "bridge_prob");
    unit(bridge_level, "bridge_level");
    if (!(noise >= 0.0) || !(feature_noise >= 0.0))
      throw InputError("synth spec: noise must be non-negative");
    if (!(fps > 0.0)) throw InputError("synth spec: fps must be positive");
    if (feature_dim < 1) throw InputError("synth spec: feature_dim must be >= 1");
  }
};

namespace detail {

struct PlantedInstance {
  ClassId cls;
  int first;  // 1-based inclusive snippet range
  int last;
};

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace detail

inline std::vector<VideoRecord> synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);

  // Feature projection shared by the whole corpus.
  const int latent_dim = 1 + spec.num_classes;
  MatrixD projection(static_cast<std::size_t>(spec.feature_dim),
                     static_cast<std::size_t>(latent_dim));
  for (double& v : projection.data()) v = detail::uniform_real(rng, -1.0, 1.0);

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<VideoRecord> corpus;
  corpus.reserve(static_cast<std::size_t>(spec.num_videos));

  for (int v = 0; v < spec.num_videos; ++v) {
    const int T = detail::uniform_int(rng, spec.t_min, spec.t_max);

    std::vector<ClassId> classes(static_cast<std::size_t>(spec.num_classes));
    for (int k = 0; k < spec.num_classes; ++k) classes[static_cast<std::size_t>(k)] = k + 1;
    std::shuffle(classes.begin(), classes.end(), rng);
    classes.resize(static_cast<std::size_t>(spec.classes_per_video));

    // Lay out instances left to right, dropping trailing ones that do not fit.
    int n = detail::uniform_int(rng, spec.instances_min, spec.instances_max);
    std::vector<int> lens, gaps;
    for (int i = 0; i < n; ++i) lens.push_back(detail::uniform_int(rng, spec.len_min, spec.len_max));
    for (int i = 0; i + 1 < n; ++i) gaps.push_back(detail::uniform_int(rng, spec.gap_min, spec.gap_max));
    auto span_of = [&](int count) {
      int s = 0;
      for (int i = 0; i < count; ++i) s += lens[static_cast<std::size_t>(i)];
      for (int i = 0; i + 1 < count; ++i) s += gaps[static_cast<std::size_t>(i)];
      return s;
    };
    while (n > 0 && span_of(n) > T) --n;
    const int slack = T - span_of(n);
    int cursor = 1 + (n > 0 ? detail::uniform_int(rng, 0, slack) : 0);

    std::vector<detail::PlantedInstance> planted;
    for (int i = 0; i < n; ++i) {
      const ClassId cls = classes[static_cast<std::size_t>(
          detail::uniform_int(rng, 0, spec.classes_per_video - 1))];
      const int len = lens[static_cast<std::size_t>(i)];
      planted.push_back({cls, cursor, cursor + len - 1});
      cursor += len + (i + 1 < n ? gaps[static_cast<std::size_t>(i)] : 0);
    }

    const std::size_t K = static_cast<std::size_t>(spec.num_classes);
    const std::size_t Tu = static_cast<std::size_t>(T);
    MatrixD act(K, Tu, spec.background);
    for (const auto& p : planted) {
      for (int x = p.first; x <= p.last; ++x)
        act(static_cast<std::size_t>(p.cls - 1), static_cast<std::size_t>(x - 1)) = spec.activation;
    }
    // Bridges fill the gap between consecutive same-class instances.
    for (std::size_t i = 0; i + 1 < planted.size(); ++i) {
      if (detail::uniform_real(rng, 0.0, 1.0) >= spec.bridge_prob) continue;
      const auto& a = planted[i];
      const auto& b = planted[i + 1];
      if (a.cls != b.cls) continue;
      for (int x = a.last + 1; x < b.first; ++x)
        act(static_cast<std::size_t>(a.cls - 1), static_cast<std::size_t>(x - 1)) = spec.bridge_level;
    }
    if (spec.noise > 0.0) {
      for (double& f : act.data()) f = std::clamp(f + spec.noise * gauss(rng), 0.0, 1.0);
    }
    // Dips are written after noise so the notch stays below dip_level.
    for (const auto& p : planted) {
      if (detail::uniform_real(rng, 0.0, 1.0) >= spec.dip_prob) continue;
      const int len = p.last - p.first + 1;
      if (len < 3) {
        const int x = p.first + len / 2;
        act(static_cast<std::size_t>(p.cls - 1), static_cast<std::size_t>(x - 1)) =
            spec.dip_level * detail::uniform_real(rng, 0.0, 1.0);
        continue;
      }
      const int notch = std::clamp(
          static_cast<int>(std::lround(len * detail::uniform_real(rng, 0.15, 0.3))), 1, len - 2);
      const int start = detail::uniform_int(rng, p.first + 1, p.last - notch);
      for (int x = start; x < start + notch; ++x)
        act(static_cast<std::size_t>(p.cls - 1), static_cast<std::size_t>(x - 1)) =
            spec.dip_level * detail::uniform_real(rng, 0.0, 1.0);
    }

    MatrixD feat(static_cast<std::size_t>(spec.feature_dim), Tu);
    std::vector<double> latent(static_cast<std::size_t>(latent_dim));
    std::vector<ClassId> owner(Tu, 0);
    for (const auto& p : planted)
      for (int x = p.first; x <= p.last; ++x) owner[static_cast<std::size_t>(x - 1)] = p.cls;
    for (std::size_t t = 0; t < Tu; ++t) {
      std::fill(latent.begin(), latent.end(), 0.0);
      if (owner[t] != 0) {
        latent[0] = 1.0;
        latent[static_cast<std::size_t>(owner[t])] = 1.0;
      }
      for (std::size_t d = 0; d < feat.rows(); ++d) {
        double s = 0.0;
        for (std::size_t j = 0; j < latent.size(); ++j) s += projection(d, j) * latent[j];
        feat(d, t) = s + spec.feature_noise * gauss(rng);
      }
    }

    VideoRecord rec;
    rec.video_id = "synth_" + std::to_string(v);
    rec.cas = Cas(std::move(act));
    rec.fps = spec.fps;
    rec.features = std::move(feat);
    const double sec_per_snippet = kFramesPerSnippet / spec.fps;
    for (const auto& p : planted) {
      rec.labels.insert(p.cls);
      rec.gt.push_back({p.cls, (p.first - 1) * sec_per_snippet, p.last * sec_per_snippet});
    }
    corpus.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace oicloc
