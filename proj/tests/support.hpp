// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random generators and straight-line reference implementations shared by the
// unit and acceptance suites. The references use plain loops over the padded
// activation array and do not call into the library's arithmetic.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "oicloc/cas.hpp"
#include "oicloc/matrix.hpp"

namespace oicloc::testing {

namespace fs = std::filesystem;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Cas random_cas(std::mt19937_64& rng, int K, int T) {
  MatrixD m(static_cast<std::size_t>(K), static_cast<std::size_t>(T));
  for (double& v : m.data()) v = uniform(rng, 0.0, 1.0);
  return Cas(std::move(m));
}

/// Piecewise-constant tracks with noise: a few plateaus over a low floor.
inline Cas blocky_cas(std::mt19937_64& rng, int K, int T) {
  MatrixD m(static_cast<std::size_t>(K), static_cast<std::size_t>(T));
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < T; ++t) m(k, t) = uniform(rng, 0.0, 0.15);
    const int blocks = uniform_int(rng, 0, 3);
    for (int b = 0; b < blocks; ++b) {
      const int len = uniform_int(rng, 1, std::max(1, T / 3));
      const int s = uniform_int(rng, 0, T - len);
      const double level = uniform(rng, 0.5, 1.0);
      for (int t = s; t < s + len; ++t) m(k, t) = std::clamp(level + uniform(rng, -0.1, 0.1), 0.0, 1.0);
    }
  }
  return Cas(std::move(m));
}

inline MatrixD constant_matrix(int K, int T, double v) {
  return MatrixD(static_cast<std::size_t>(K), static_cast<std::size_t>(T), v);
}

/// 1 x T CAS from a list of values.
inline Cas track(const std::vector<double>& f) {
  MatrixD m(1, f.size());
  for (std::size_t t = 0; t < f.size(); ++t) m(0, t) = f[t];
  return Cas(std::move(m));
}

/// The worked example: K = 1, T = 7.
inline Cas cas0() { return track({0.0, 0.1, 0.9, 1.0, 0.8, 0.1, 0.0}); }

// ---------------------------------------------------------------------------
// Reference loss

/// f on the padded grid [0, T+1], read straight from the activation matrix.
inline double ref_f(const Cas& cas, int k, long u) {
  const long T = static_cast<long>(cas.activations().cols());
  if (u < 1 || u > T) return 0.0;
  return cas.activations()(static_cast<std::size_t>(k - 1), static_cast<std::size_t>(u - 1));
}

struct RefLoss {
  bool valid = false;
  double a_inner = 0.0;
  double a_outer = 0.0;
  double loss = 0.0;
};

/// Contrast loss on integer boundaries by direct summation.
inline RefLoss ref_loss_int(const Cas& cas, int k, long x1, long x2, long X1, long X2) {
  RefLoss r;
  const long T = static_cast<long>(cas.activations().cols());
  if (X1 < 0 || X2 > T + 1 || X1 > x1 || x1 > x2 || x2 > X2) return r;
  double inner = 0.0, ring = 0.0;
  long n_in = 0, n_ring = 0;
  for (long u = X1; u <= X2; ++u) {
    if (u >= x1 && u <= x2) {
      inner += ref_f(cas, k, u);
      ++n_in;
    } else {
      ring += ref_f(cas, k, u);
      ++n_ring;
    }
  }
  if (n_ring == 0) return r;
  r.valid = true;
  r.a_inner = inner / static_cast<double>(n_in);
  r.a_outer = ring / static_cast<double>(n_ring);
  r.loss = r.a_outer - r.a_inner;
  return r;
}

inline RefLoss ref_loss(const Cas& cas, int k, double x1, double x2, double X1, double X2) {
  return ref_loss_int(cas, k, std::lround(x1), std::lround(x2), std::lround(X1), std::lround(X2));
}

// ---------------------------------------------------------------------------
// Reference detector: regression map -> anchors -> per-position argmin ->
// loss filter -> per-class greedy suppression.

struct RefDetection {
  int cls = 0;
  int position = 0;  // 0 for enumerated segments
  int anchor = -1;
  double x1 = 0.0, x2 = 0.0, X1 = 0.0, X2 = 0.0;
  double loss = 0.0;
};

inline double ref_iou(double a1, double a2, double b1, double b2) {
  const double lo = std::max(a1, b1), hi = std::min(a2, b2);
  const double inter = hi > lo ? hi - lo : 0.0;
  const double uni = std::max(a2, b2) - std::min(a1, b1);
  if (uni <= 0.0) return (a1 == b1 && a2 == b2) ? 1.0 : 0.0;
  return inter / uni;
}

/// Greedy suppression: best (lowest loss) first, earlier start on ties.
inline std::vector<RefDetection> ref_suppress(std::vector<RefDetection> c, double iou_thresh) {
  std::stable_sort(c.begin(), c.end(), [](const RefDetection& a, const RefDetection& b) {
    if (1.0 - a.loss != 1.0 - b.loss) return 1.0 - a.loss > 1.0 - b.loss;
    return a.x1 < b.x1;
  });
  std::vector<RefDetection> kept;
  for (const auto& d : c) {
    bool ok = true;
    for (const auto& q : kept)
      if (ref_iou(d.x1, d.x2, q.x1, q.x2) > iou_thresh) ok = false;
    if (ok) kept.push_back(d);
  }
  return kept;
}

/// Outer boundary of inner [x1, x2] with length w: at least one snippet per
/// side, clipped to [0, T+1].
inline void ref_outer(double x1, double x2, double w, double alpha, int T, double& X1, double& X2) {
  X1 = std::min(x1 - w * alpha, x1 - 1.0);
  X2 = std::max(x2 + w * alpha, x2 + 1.0);
  X1 = std::min(std::max(X1, 0.0), T + 1.0);
  X2 = std::min(std::max(X2, 0.0), T + 1.0);
}

/// reg is 2M x T with rows (t_x, t_w) per anchor.
inline std::vector<RefDetection> ref_select(const Cas& cas, const MatrixD& reg, const std::vector<double>& scales,
                                            double alpha, const std::set<int>& classes, double act_min,
                                            double loss_max, double nms_iou) {
  const int T = static_cast<int>(cas.activations().cols());
  const int M = static_cast<int>(scales.size());
  std::vector<RefDetection> out;
  for (int k : classes) {
    std::vector<RefDetection> cands;
    for (int t = 1; t <= T; ++t) {
      if (!(ref_f(cas, k, t) >= act_min)) continue;
      RefDetection best;
      bool have = false;
      for (int m = 0; m < M; ++m) {
        const double tx = reg(2 * m, t - 1), tw = reg(2 * m + 1, t - 1);
        const double c = t + scales[m] * tx;
        const double w = scales[m] * std::exp(tw);
        double x1 = c - w / 2.0, x2 = c + w / 2.0;
        x1 = std::min(std::max(x1, 0.0), T + 1.0);
        x2 = std::min(std::max(x2, 0.0), T + 1.0);
        if (!(x2 > x1)) continue;
        double X1, X2;
        ref_outer(x1, x2, w, alpha, T, X1, X2);
        const RefLoss l = ref_loss(cas, k, x1, x2, X1, X2);
        if (!l.valid) continue;
        if (!have || l.loss < best.loss) {
          best = {k, t, m, x1, x2, X1, X2, l.loss};
          have = true;
        }
      }
      if (have && best.loss <= loss_max) cands.push_back(best);
    }
    for (const auto& d : ref_suppress(cands, nms_iou)) out.push_back(d);
  }
  return out;
}

/// Every integer segment of class k up to max_len snippets (0 = no cap).
inline std::vector<RefDetection> ref_enumerate(const Cas& cas, int k, int max_len, double alpha, double loss_max,
                                               double nms_iou) {
  const int T = static_cast<int>(cas.activations().cols());
  const int cap = max_len <= 0 ? T : max_len;
  std::vector<RefDetection> cands;
  for (int a = 1; a <= T; ++a) {
    for (int b = a; b <= T; ++b) {
      if (b - a + 1 > cap) break;
      double X1, X2;
      ref_outer(a, b, b - a + 1, alpha, T, X1, X2);
      const RefLoss l = ref_loss(cas, k, a, b, X1, X2);
      if (!l.valid || l.loss > loss_max) continue;
      cands.push_back({k, 0, -1, double(a), double(b), X1, X2, l.loss});
    }
  }
  return ref_suppress(cands, nms_iou);
}

// ---------------------------------------------------------------------------
// Scratch directories

inline fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("oicloc_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace oicloc::testing
