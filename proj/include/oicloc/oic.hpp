// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "oicloc/cas.hpp"
#include "oicloc/error.hpp"

namespace oicloc {

/// Nearest snippet of a continuous boundary, ties away from zero.
inline long round_boundary(double x) { return std::lround(x); }

/// One candidate segment: inner boundary [x1, x2], outer boundary [X1, X2]
/// (both in continuous snippet coordinates) and the class it is scored on.
struct SegmentHypothesis {
  double x1 = 0.0;
  double x2 = 0.0;
  double X1 = 0.0;
  double X2 = 0.0;
  ClassId k = 1;
};

struct OicBreakdown {
  double a_outer = 0.0;
  double a_inner = 0.0;
  double loss = 0.0;
};

struct BoundaryGradients {
  double d_x1 = 0.0;
  double d_x2 = 0.0;
  double d_X1 = 0.0;
  double d_X2 = 0.0;
};

/// Integer view of a hypothesis after rounding, validated against the padded
/// grid [0, T+1].
struct RoundedSegment {
  long x1, x2, X1, X2;

  long inner_len() const { return x2 - x1 + 1; }
  long outer_len() const { return X2 - X1 + 1; }
  long ring_len() const { return outer_len() - inner_len(); }
};

inline RoundedSegment round_segment(const Cas& cas, const SegmentHypothesis& h) {
  if (!std::isfinite(h.x1) || !std::isfinite(h.x2) || !std::isfinite(h.X1) ||
      !std::isfinite(h.X2))
    throw InputError("non-finite boundary");
  if (h.k < 1 || h.k > cas.num_classes())
    throw InputError("class " + std::to_string(h.k) + " outside 1..K");
  const RoundedSegment r{round_boundary(h.x1), round_boundary(h.x2), round_boundary(h.X1),
                         round_boundary(h.X2)};
  const long hi = cas.length() + 1;
  if (r.X1 < 0 || r.X2 > hi)
    throw InputError("boundary outside padded grid [0, T+1]");
  if (!(r.X1 <= r.x1 && r.x1 <= r.x2 && r.x2 <= r.X2))
    throw InputError("hypothesis needs X1 <= x1 <= x2 <= X2 after rounding");
  if (r.ring_len() == 0) throw DegenerateOuterError("outer ring is empty after rounding");
  return r;
}

inline OicBreakdown oic_forward(const Cas& cas, const SegmentHypothesis& h) {
  const RoundedSegment r = round_segment(cas, h);
  const double inner_sum = cas.sum(h.k, r.x1, r.x2);
  const double ring_sum = cas.sum(h.k, r.X1, r.X2) - inner_sum;
  OicBreakdown out;
  out.a_inner = inner_sum / static_cast<double>(r.inner_len());
  out.a_outer = ring_sum / static_cast<double>(r.ring_len());
  out.loss = out.a_outer - out.a_inner;
  return out;
}

/// Partial derivatives of the OIC loss with respect to the four boundaries,
/// evaluated at the rounded coordinates.
inline BoundaryGradients oic_backward(const Cas& cas, const SegmentHypothesis& h) {
  const RoundedSegment r = round_segment(cas, h);
  const double inner_sum = cas.sum(h.k, r.x1, r.x2);
  const double ring_sum = cas.sum(h.k, r.X1, r.X2) - inner_sum;
  const double n_in = static_cast<double>(r.inner_len());
  const double n_ring = static_cast<double>(r.ring_len());
  const double a_in = inner_sum / n_in;
  const double a_out = ring_sum / n_ring;

  const double f_x1 = cas.at(h.k, r.x1);
  const double f_x2 = cas.at(h.k, r.x2);
  const double f_X1 = cas.at(h.k, r.X1);
  const double f_X2 = cas.at(h.k, r.X2);

  BoundaryGradients g;
  g.d_x1 = (f_x1 - a_out) / n_ring - (a_in - f_x1) / n_in;
  g.d_x2 = (a_out - f_x2) / n_ring - (f_x2 - a_in) / n_in;
  g.d_X1 = (a_out - f_X1) / n_ring;
  g.d_X2 = (f_X2 - a_out) / n_ring;
  return g;
}

// ---------------------------------------------------------------------------
// Inner-only variant: rewards inner activation, ignores the outer ring.

namespace detail {

inline RoundedSegment round_inner(const Cas& cas, const SegmentHypothesis& h) {
  if (!std::isfinite(h.x1) || !std::isfinite(h.x2)) throw InputError("non-finite boundary");
  if (h.k < 1 || h.k > cas.num_classes())
    throw InputError("class " + std::to_string(h.k) + " outside 1..K");
  const long x1 = round_boundary(h.x1), x2 = round_boundary(h.x2);
  if (x2 - x1 + 1 < 1) throw InputError("inner area is empty");
  if (x1 < 0 || x2 > cas.length() + 1) throw InputError("boundary outside padded grid [0, T+1]");
  return {x1, x2, x1, x2};
}

}  // namespace detail

inline double inner_only_forward(const Cas& cas, const SegmentHypothesis& h) {
  const RoundedSegment r = detail::round_inner(cas, h);
  return -cas.sum(h.k, r.x1, r.x2) / static_cast<double>(r.inner_len());
}

/// Only d_x1 and d_x2 are populated; the outer partials are always zero.
inline BoundaryGradients inner_only_backward(const Cas& cas, const SegmentHypothesis& h) {
  const RoundedSegment r = detail::round_inner(cas, h);
  const double n_in = static_cast<double>(r.inner_len());
  const double a_in = cas.sum(h.k, r.x1, r.x2) / n_in;
  BoundaryGradients g;
  g.d_x1 = -(a_in - cas.at(h.k, r.x1)) / n_in;
  g.d_x2 = -(cas.at(h.k, r.x2) - a_in) / n_in;
  return g;
}

// ---------------------------------------------------------------------------
// Step-filter view of the loss.

/// Signed weight profile over [first, first + numerators.size() - 1].
///
/// Weight at position u is numerators[u - first] / denominator. With
/// denominator = inner_len * ring_len the outer ring carries inner_len and
/// the inner area carries -ring_len, so the integer numerators sum to zero
/// exactly and the profile integrates to +1 on the ring and -1 inside.
struct StepFilter {
  long first = 0;
  std::vector<long> numerators;
  long denominator = 1;

  long last() const { return first + static_cast<long>(numerators.size()) - 1; }

  double weight(long u) const {
    if (u < first || u > last()) return 0.0;
    return static_cast<double>(numerators[static_cast<std::size_t>(u - first)]) /
           static_cast<double>(denominator);
  }

  std::vector<double> weights() const {
    std::vector<double> w(numerators.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = static_cast<double>(numerators[i]) / static_cast<double>(denominator);
    return w;
  }

  long numerator_sum() const { return std::accumulate(numerators.begin(), numerators.end(), 0L); }

  /// Response of the filter on class k of the CAS (zero padding outside).
  double apply(const Cas& cas, ClassId k) const {
    double s = 0.0;
    for (long u = first; u <= last(); ++u) s += weight(u) * cas.at(k, u);
    return s;
  }
};

inline StepFilter step_filter_weights(const Cas& cas, const SegmentHypothesis& h) {
  const RoundedSegment r = round_segment(cas, h);
  StepFilter f;
  f.first = r.X1;
  f.denominator = r.inner_len() * r.ring_len();
  f.numerators.assign(static_cast<std::size_t>(r.outer_len()), r.inner_len());
  for (long u = r.x1; u <= r.x2; ++u)
    f.numerators[static_cast<std::size_t>(u - r.X1)] = -r.ring_len();
  return f;
}

}  // namespace oicloc
