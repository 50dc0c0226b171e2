// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oicloc/error.hpp"
#include "oicloc/oic.hpp"

namespace oicloc {

struct AnchorConfig {
  std::vector<double> scales{1, 2, 4, 8, 16, 32};

  std::size_t size() const { return scales.size(); }

  void validate() const {
    if (scales.empty()) throw ConfigError("anchor config needs at least one scale");
    for (std::size_t m = 0; m < scales.size(); ++m) {
      if (!(scales[m] >= 1.0)) throw ConfigError("anchor scales must be >= 1");
      if (m > 0 && !(scales[m] > scales[m - 1]))
        throw ConfigError("anchor scales must be strictly increasing");
    }
  }
};

struct RegressionPair {
  double t_x = 0.0;  // center shift, in anchor lengths
  double t_w = 0.0;  // log length scale
};

struct RegressedSegment {
  double x1 = 0.0;
  double x2 = 0.0;
  double w = 0.0;  // predicted length, w_a * exp(t_w)
};

inline RegressedSegment regress_anchor(double s_x, double w_a, RegressionPair r) {
  if (!std::isfinite(r.t_x) || !std::isfinite(r.t_w))
    throw InputError("non-finite regression values");
  if (!(w_a > 0.0)) throw InputError("anchor length must be positive");
  const double c_x = s_x + w_a * r.t_x;
  const double w = w_a * std::exp(r.t_w);
  return {c_x - w / 2.0, c_x + w / 2.0, w};
}

struct ClippedInterval {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_clipped = false;
  bool hi_clipped = false;
};

/// Clamp an interval onto the zero-padded grid [0, T+1].
///
/// Both ends are clamped to the full grid so an interval that regressed
/// entirely off one side still comes back ordered.
inline ClippedInterval clip_zero_pad(double x1, double x2, int T) {
  const double hi = static_cast<double>(T) + 1.0;
  ClippedInterval c;
  c.lo = std::clamp(x1, 0.0, hi);
  c.hi = std::clamp(x2, 0.0, hi);
  c.lo_clipped = c.lo != x1;
  c.hi_clipped = c.hi != x2;
  return c;
}

struct OuterBoundary {
  double X1 = 0.0;
  double X2 = 0.0;
  bool min_offset = false;  // w * alpha < 1: both sides sit exactly one snippet out
  bool X1_clipped = false;
  bool X2_clipped = false;
};

/// Inflate the inner boundary by alpha * w per side, but never by less than
/// one snippet, then clip onto [0, T+1].
inline OuterBoundary inflate(double x1, double x2, double w, double alpha, int T) {
  if (!(x1 <= x2)) throw InputError("inflate needs x1 <= x2");
  if (!(w > 0.0) || !(alpha > 0.0)) throw InputError("inflate needs w > 0 and alpha > 0");
  OuterBoundary o;
  const double pad = w * alpha;
  o.min_offset = pad < 1.0;
  const double X1 = o.min_offset ? x1 - 1.0 : x1 - pad;
  const double X2 = o.min_offset ? x2 + 1.0 : x2 + pad;
  const ClippedInterval c = clip_zero_pad(X1, X2, T);
  o.X1 = c.lo;
  o.X2 = c.hi;
  o.X1_clipped = c.lo_clipped;
  o.X2_clipped = c.hi_clipped;
  return o;
}

/// Which regime each coordinate went through on the way from (t_x, t_w) to
/// the hypothesis. Needed to pick the right partials on the way back.
struct ClipState {
  bool x1_clipped = false;
  bool x2_clipped = false;
  bool X1_clipped = false;
  bool X2_clipped = false;
  bool min_offset = false;
};

/// Result of regress -> clip -> inflate -> clip for one anchor.
struct TransformedAnchor {
  double x1 = 0.0, x2 = 0.0, X1 = 0.0, X2 = 0.0;
  double w = 0.0;
  ClipState state;
  // Rounded outer ring is empty (inner clipped flat against both grid ends);
  // such anchors are never scored.
  bool degenerate = false;

  SegmentHypothesis hypothesis(ClassId k) const { return {x1, x2, X1, X2, k}; }
};

inline TransformedAnchor transform_anchor(double s_x, double w_a, RegressionPair r,
                                          double alpha, int T) {
  const RegressedSegment seg = regress_anchor(s_x, w_a, r);
  const ClippedInterval inner = clip_zero_pad(seg.x1, seg.x2, T);
  const OuterBoundary outer = inflate(inner.lo, inner.hi, seg.w, alpha, T);
  TransformedAnchor a;
  a.x1 = inner.lo;
  a.x2 = inner.hi;
  a.X1 = outer.X1;
  a.X2 = outer.X2;
  a.w = seg.w;
  a.state = {inner.lo_clipped, inner.hi_clipped, outer.X1_clipped, outer.X2_clipped,
             outer.min_offset};
  const long ring = (round_boundary(a.X2) - round_boundary(a.X1)) -
                    (round_boundary(a.x2) - round_boundary(a.x1));
  a.degenerate = ring <= 0;
  return a;
}

struct RegressionGradient {
  double d_tx = 0.0;
  double d_tw = 0.0;
};

/// Chain rule from boundary partials back to (t_x, t_w).
///
/// Clipping is straight-through: a clipped coordinate passes its upstream
/// partial to the parameters as if it had not been clipped.
inline RegressionGradient transform_backward(const BoundaryGradients& g, double /*s_x*/,
                                             double w_a, RegressionPair r, double alpha,
                                             const ClipState& state) {
  const double w = w_a * std::exp(r.t_w);
  const double half = w / 2.0;
  // d coord / d t_w for each coordinate; d coord / d t_x is w_a for all four.
  const double dx1_dtw = -half;
  const double dx2_dtw = half;
  const double dX1_dtw = state.min_offset ? dx1_dtw : -half - alpha * w;
  const double dX2_dtw = state.min_offset ? dx2_dtw : half + alpha * w;

  RegressionGradient out;
  out.d_tx = w_a * (g.d_x1 + g.d_x2 + g.d_X1 + g.d_X2);
  out.d_tw = g.d_x1 * dx1_dtw + g.d_x2 * dx2_dtw + g.d_X1 * dX1_dtw + g.d_X2 * dX2_dtw;
  return out;
}

}  // namespace oicloc
