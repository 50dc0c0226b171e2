// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// Numerical gradient checks for the loss, the anchor transform, the
// regressor and the whole chain between them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oicloc/boundary.hpp"
#include "oicloc/cas.hpp"
#include "oicloc/oic.hpp"
#include "oicloc/regressor.hpp"
#include "oicloc/selection.hpp"

namespace oicloc {

using OicGradFn = std::function<BoundaryGradients(const Cas&, const SegmentHypothesis&)>;

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int oic_cases = 1000;
  int boundary_cases = 1000;
  int regressor_nets = 3;
  int end_to_end_videos = 3;
  double fd_step = 1e-4;
  double rel_tol = 1e-4;
  // Gradient implementation under test; replaceable for mutation tests.
  OicGradFn oic_grad = [](const Cas& c, const SegmentHypothesis& h) { return oic_backward(c, h); };
};

struct SuiteResult {
  std::string name;
  long checked = 0;
  long skipped = 0;
  long failed = 0;
  double worst = 0.0;      // largest error seen, in the suite's own metric
  double tolerance = 0.0;  // informative; per-case tolerances may vary

  bool passed() const { return checked > 0 && failed == 0; }
};

struct GradcheckReport {
  std::vector<SuiteResult> suites;

  bool passed() const {
    return !suites.empty() &&
           std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed(); });
  }

  std::string text() const {
    std::ostringstream ss;
    ss.precision(3);
    for (const auto& s : suites) {
      ss << (s.passed() ? "PASS " : "FAIL ") << s.name << ": checked " << s.checked << ", skipped "
         << s.skipped << ", failed " << s.failed << ", worst " << std::scientific << s.worst
         << " (tol " << s.tolerance << ")" << std::defaultfloat << "\n";
    }
    ss << (passed() ? "gradcheck passed" : "gradcheck FAILED") << "\n";
    return ss.str();
  }
};

/// |a - n| relative to the larger magnitude, floored so that values near
/// zero are compared absolutely.
inline double relative_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

namespace detail {

inline double gc_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int gc_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline void record(SuiteResult& s, double err, double tol) {
  ++s.checked;
  s.worst = std::max(s.worst, err);
  if (!(err <= tol)) ++s.failed;
}

// Symmetric +-1 snippet difference of the loss along one coordinate.
inline double discrete_diff(const Cas& cas, SegmentHypothesis h, double SegmentHypothesis::*c) {
  SegmentHypothesis hp = h, hm = h;
  hp.*c += 1.0;
  hm.*c -= 1.0;
  return (oic_forward(cas, hp).loss - oic_forward(cas, hm).loss) / 2.0;
}

// Integer hypothesis with inner length n, left/right ring widths pl/pr and
// the outer boundary at least `margin` snippets from the padded grid ends.
inline SegmentHypothesis place(std::mt19937_64& rng, int T, int n, int pl, int pr, int margin = 1) {
  const int x1 = gc_int(rng, margin + pl, T + 1 - margin - pr - n + 1);
  return {static_cast<double>(x1), static_cast<double>(x1 + n - 1), static_cast<double>(x1 - pl),
          static_cast<double>(x1 + n - 1 + pr), 1};
}

// Regressed coordinates before any clipping, the quantities the
// straight-through backward differentiates.
struct RawCoords {
  double x1, x2, X1, X2;
  bool min_offset;
};

inline RawCoords raw_coords(double s_x, double w_a, RegressionPair r, double alpha) {
  const RegressedSegment seg = regress_anchor(s_x, w_a, r);
  const double pad = seg.w * alpha;
  const bool min_off = pad < 1.0;
  return {seg.x1, seg.x2, min_off ? seg.x1 - 1.0 : seg.x1 - pad, min_off ? seg.x2 + 1.0 : seg.x2 + pad,
          min_off};
}

inline double dot(const BoundaryGradients& g, const RawCoords& c) {
  return g.d_x1 * c.x1 + g.d_x2 * c.x2 + g.d_X1 * c.X1 + g.d_X2 * c.X2;
}

inline std::vector<bool> relu_pattern(const ForwardCache& c) {
  std::vector<bool> p;
  for (const auto& m : c.relu_out)
    for (double v : m.data()) p.push_back(v > 0.0);
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// OIC loss suites

/// Hand-worked hypotheses with exact expected gradients.
inline SuiteResult gradcheck_oic_fixtures(const GradcheckOptions& opt) {
  SuiteResult s{"oic.fixtures"};
  s.tolerance = 1e-6;
  struct Fixture {
    std::vector<double> cas;
    SegmentHypothesis h;
    BoundaryGradients want;
  };
  const std::vector<Fixture> fixtures{
      // Peak fully inside, flat context on both sides.
      {{0, .1, .9, 1, .8, .1, 0}, {3, 5, 2, 6, 1}, {0.4, -0.95 / 3.0, 0.0, 0.0}},
      // Uneven context: every coordinate has a non-zero gradient.
      {{.2, .1, .9, 1, .8, .3, 0}, {3, 5, 1, 7, 1}, {0.1875, -0.65 / 4.0 + 0.1 / 3.0, -0.0125, -0.0375}},
  };
  for (const auto& f : fixtures) {
    MatrixD m(1, f.cas.size());
    for (std::size_t i = 0; i < f.cas.size(); ++i) m(0, i) = f.cas[i];
    const Cas cas(std::move(m));
    const BoundaryGradients g = opt.oic_grad(cas, f.h);
    detail::record(s, std::abs(g.d_x1 - f.want.d_x1), s.tolerance);
    detail::record(s, std::abs(g.d_x2 - f.want.d_x2), s.tolerance);
    detail::record(s, std::abs(g.d_X1 - f.want.d_X1), s.tolerance);
    detail::record(s, std::abs(g.d_X2 - f.want.d_X2), s.tolerance);
  }
  return s;
}

/// Analytic gradients against +-1 snippet differences on random activations.
/// Inner and ring are at least 10 snippets; the allowed gap is
/// 3 / min(inner_len, ring_len).
inline SuiteResult gradcheck_oic_random(const GradcheckOptions& opt) {
  SuiteResult s{"oic.discrete"};
  std::mt19937_64 rng(opt.seed);
  for (int c = 0; c < opt.oic_cases; ++c) {
    const int T = detail::gc_int(rng, 40, 200);
    MatrixD m(1, static_cast<std::size_t>(T));
    for (double& v : m.data()) v = detail::gc_uniform(rng, 0.0, 1.0);
    const Cas cas(std::move(m));
    const int n = detail::gc_int(rng, 10, T / 2);
    const int ring = detail::gc_int(rng, 10, std::max(10, T - n - 2));
    const int pl = detail::gc_int(rng, 2, ring - 2);
    const int pr = ring - pl;
    if (n + ring + 2 > T) {
      ++s.skipped;
      continue;
    }
    const SegmentHypothesis h = detail::place(rng, T, n, pl, pr);
    const double tol = 3.0 / std::min(n, ring);
    s.tolerance = std::max(s.tolerance, tol);
    const BoundaryGradients g = opt.oic_grad(cas, h);
    detail::record(s, std::abs(g.d_x1 - detail::discrete_diff(cas, h, &SegmentHypothesis::x1)), tol);
    detail::record(s, std::abs(g.d_x2 - detail::discrete_diff(cas, h, &SegmentHypothesis::x2)), tol);
    detail::record(s, std::abs(g.d_X1 - detail::discrete_diff(cas, h, &SegmentHypothesis::X1)), tol);
    detail::record(s, std::abs(g.d_X2 - detail::discrete_diff(cas, h, &SegmentHypothesis::X2)), tol);
  }
  return s;
}

/// Same comparison on slowly varying activations, where the discrete
/// difference tracks the derivative closely enough to check signs and
/// magnitudes. The allowed gap is 25% of the difference plus a slack set by
/// the profile's steepness; the recorded error is gap / allowed.
inline SuiteResult gradcheck_oic_smooth(const GradcheckOptions& opt) {
  SuiteResult s{"oic.smooth"};
  s.tolerance = 1.0;
  std::mt19937_64 rng(opt.seed + 1);
  const double pi = std::acos(-1.0);
  for (int c = 0; c < opt.oic_cases; ++c) {
    const int T = detail::gc_int(rng, 120, 300);
    const double period = detail::gc_uniform(rng, 80.0, 240.0);
    const double phase = detail::gc_uniform(rng, 0.0, 2.0 * pi);
    const double amp = 0.45;
    MatrixD m(1, static_cast<std::size_t>(T));
    for (int u = 1; u <= T; ++u)
      m(0, static_cast<std::size_t>(u - 1)) = 0.5 + amp * std::sin(2.0 * pi * u / period + phase);
    const Cas cas(std::move(m));
    const int n = detail::gc_int(rng, 20, 60);
    const int pl = detail::gc_int(rng, 10, 30), pr = detail::gc_int(rng, 10, 30);
    // stay off the zero pad, where the profile jumps
    const SegmentHypothesis h = detail::place(rng, T, n, pl, pr, 2);
    const double slope = amp * 2.0 * pi / period;
    const double mn = std::min(n, pl + pr);
    const double slack = 2.0 * slope / mn + 2.0 / (mn * mn);
    const BoundaryGradients g = opt.oic_grad(cas, h);
    auto check = [&](double a, double SegmentHypothesis::*coord) {
      const double d = detail::discrete_diff(cas, h, coord);
      const double allowed = 0.25 * std::abs(d) + slack;
      detail::record(s, std::abs(a - d) / allowed, 1.0);
    };
    check(g.d_x1, &SegmentHypothesis::x1);
    check(g.d_x2, &SegmentHypothesis::x2);
    check(g.d_X1, &SegmentHypothesis::X1);
    check(g.d_X2, &SegmentHypothesis::X2);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Anchor transform

/// transform_backward against central differences of a fixed linear
/// functional of the (unclipped) coordinates. Cases whose inflation regime
/// flips within the step are skipped.
inline SuiteResult gradcheck_boundary(const GradcheckOptions& opt) {
  SuiteResult s{"boundary.fd"};
  s.tolerance = opt.rel_tol;
  std::mt19937_64 rng(opt.seed + 2);
  const double h = opt.fd_step;
  const std::vector<double> alphas{0.125, 0.25, 0.5};
  for (int c = 0; c < opt.boundary_cases; ++c) {
    const int T = detail::gc_int(rng, 5, 200);
    const double s_x = detail::gc_int(rng, 1, T);
    const double w_a = std::pow(2.0, detail::gc_int(rng, 0, 6));
    const RegressionPair r{detail::gc_uniform(rng, -1.5, 1.5), detail::gc_uniform(rng, -1.5, 1.5)};
    const double alpha = alphas[static_cast<std::size_t>(detail::gc_int(rng, 0, 2))];
    const BoundaryGradients g{detail::gc_uniform(rng, -1, 1), detail::gc_uniform(rng, -1, 1),
                              detail::gc_uniform(rng, -1, 1), detail::gc_uniform(rng, -1, 1)};
    const TransformedAnchor a = transform_anchor(s_x, w_a, r, alpha, T);
    const RegressionGradient an = transform_backward(g, s_x, w_a, r, alpha, a.state);

    const auto base = detail::raw_coords(s_x, w_a, r, alpha);
    auto eval = [&](RegressionPair q, bool& regime_ok) {
      const auto rc = detail::raw_coords(s_x, w_a, q, alpha);
      regime_ok = regime_ok && rc.min_offset == base.min_offset;
      return detail::dot(g, rc);
    };
    bool ok = true;
    const double ntx = (eval({r.t_x + h, r.t_w}, ok) - eval({r.t_x - h, r.t_w}, ok)) / (2 * h);
    const double ntw = (eval({r.t_x, r.t_w + h}, ok) - eval({r.t_x, r.t_w - h}, ok)) / (2 * h);
    if (!ok) {
      ++s.skipped;
      continue;
    }
    detail::record(s, relative_error(an.d_tx, ntx), opt.rel_tol);
    detail::record(s, relative_error(an.d_tw, ntw), opt.rel_tol);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Regressor

inline NetworkConfig tiny_network_config() {
  NetworkConfig n;
  n.feature_dim = 3;
  n.hidden = 4;
  n.hidden_layers = 3;
  n.num_anchors = 2;
  return n;
}

/// NetworkB::backward against central differences of a random linear probe
/// of the train-mode output, over every parameter. Perturbations that flip
/// a ReLU are skipped.
inline SuiteResult gradcheck_regressor(const GradcheckOptions& opt) {
  SuiteResult s{"regressor.fd"};
  s.tolerance = opt.rel_tol;
  std::mt19937_64 rng(opt.seed + 3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double h = opt.fd_step;
  for (int i = 0; i < opt.regressor_nets; ++i) {
    NetworkB net(tiny_network_config());
    net.initialize(opt.seed + 100 + static_cast<std::uint64_t>(i), true);
    const std::size_t T = static_cast<std::size_t>(detail::gc_int(rng, 5, 12));
    MatrixD feat(3, T);
    for (double& v : feat.data()) v = gauss(rng);
    MatrixD probe(4, T);
    for (double& v : probe.data()) v = gauss(rng);

    auto loss_of = [&](const ForwardResult& f) {
      double l = 0.0;
      for (std::size_t j = 0; j < probe.size(); ++j) l += probe.data()[j] * f.out.data()[j];
      return l;
    };
    const ForwardResult f0 = net.forward(feat, Mode::Train);
    const auto pattern = detail::relu_pattern(f0.cache);
    const ParamGrads g = net.backward(f0.cache, probe);

    for (std::size_t p = 0; p < net.params().size(); ++p) {
      for (std::size_t j = 0; j < net.params()[p].values.size(); ++j) {
        const double orig = net.params()[p].values[j];
        net.mutable_params()[p].values[j] = orig + h;
        const ForwardResult fp = net.forward(feat, Mode::Train);
        net.mutable_params()[p].values[j] = orig - h;
        const ForwardResult fm = net.forward(feat, Mode::Train);
        net.mutable_params()[p].values[j] = orig;
        if (detail::relu_pattern(fp.cache) != pattern || detail::relu_pattern(fm.cache) != pattern) {
          ++s.skipped;
          continue;
        }
        const double num = (loss_of(fp) - loss_of(fm)) / (2 * h);
        detail::record(s, relative_error(g[p][j], num), opt.rel_tol);
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// End to end

/// Parameters -> regression map -> anchors -> kept segments. The loss is
/// linearized at the boundaries: each kept segment's OIC gradients are
/// frozen and dotted with its unclipped coordinates, which is the quantity
/// the backward pass differentiates. A perturbation is used only if it keeps
/// every kept segment in the same rounding cell and inflation regime and
/// flips no ReLU.
inline SuiteResult gradcheck_end_to_end(const GradcheckOptions& opt) {
  SuiteResult s{"end_to_end.fd"};
  s.tolerance = opt.rel_tol;
  std::mt19937_64 rng(opt.seed + 4);
  const double h = opt.fd_step;
  AnchorConfig anchors;
  anchors.scales = {2, 6};
  const double alpha = 0.25;

  for (int v = 0; v < opt.end_to_end_videos; ++v) {
    const int T = detail::gc_int(rng, 16, 30);
    MatrixD act(2, static_cast<std::size_t>(T));
    for (std::size_t k = 0; k < 2; ++k) {
      const int a = detail::gc_int(rng, 2, T / 2), b = detail::gc_int(rng, a + 2, T - 1);
      for (int t = 1; t <= T; ++t) {
        const double base = (t >= a && t <= b) ? 0.85 : 0.05;
        act(k, static_cast<std::size_t>(t - 1)) = std::clamp(base + detail::gc_uniform(rng, -0.05, 0.05), 0.0, 1.0);
      }
    }
    const Cas cas(std::move(act));
    NetworkB net(tiny_network_config());
    net.initialize(opt.seed + 200 + static_cast<std::uint64_t>(v), true);
    // keep the regression mild so anchors stay on the grid
    for (auto& p : net.mutable_params())
      if (p.name.rfind("pred.", 0) == 0)
        for (double& x : p.values) x *= 0.2;
    MatrixD feat(3, static_cast<std::size_t>(T));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& x : feat.data()) x = gauss(rng);

    const ForwardResult f0 = net.forward(feat, Mode::Train);
    const CandidateGrid grid = build_candidates(f0.out, anchors, T, alpha);
    SelectionParams sp;
    sp.loss_max = 0.0;
    const SelectionResult sel = select(cas, grid, {1, 2}, sp, 30.0);
    if (sel.kept.empty()) {
      ++s.skipped;
      continue;
    }

    struct Frozen {
      int t;
      std::size_t m;
      BoundaryGradients g;
      RoundedSegment cell;
      bool min_offset;
    };
    std::vector<Frozen> frozen;
    RegressionMap grad_out(f0.out.rows(), f0.out.cols(), 0.0);
    for (const auto& ks : sel.kept) {
      const TransformedAnchor& a = grid.at(ks.position, ks.anchor);
      const SegmentHypothesis hyp = a.hypothesis(ks.pred.cls);
      const BoundaryGradients g = opt.oic_grad(cas, hyp);
      const RegressionPair r = grid.regression_at(ks.position, ks.anchor);
      const RegressionGradient rg =
          transform_backward(g, ks.position, anchors.scales[ks.anchor], r, alpha, a.state);
      const auto col = static_cast<std::size_t>(ks.position - 1);
      grad_out(2 * ks.anchor, col) += rg.d_tx;
      grad_out(2 * ks.anchor + 1, col) += rg.d_tw;
      frozen.push_back({ks.position, ks.anchor, g, round_segment(cas, hyp), a.state.min_offset});
    }
    const ParamGrads analytic = net.backward(f0.cache, grad_out);
    const auto pattern = detail::relu_pattern(f0.cache);

    auto linearized = [&](const ForwardResult& f, bool& ok) {
      ok = ok && detail::relu_pattern(f.cache) == pattern;
      double l = 0.0;
      for (const auto& fr : frozen) {
        const auto col = static_cast<std::size_t>(fr.t - 1);
        const RegressionPair r{f.out(2 * fr.m, col), f.out(2 * fr.m + 1, col)};
        const auto rc = detail::raw_coords(fr.t, anchors.scales[fr.m], r, alpha);
        const TransformedAnchor a = transform_anchor(fr.t, anchors.scales[fr.m], r, alpha, T);
        const RoundedSegment cell{round_boundary(a.x1), round_boundary(a.x2), round_boundary(a.X1),
                                  round_boundary(a.X2)};
        ok = ok && rc.min_offset == fr.min_offset && cell.x1 == fr.cell.x1 && cell.x2 == fr.cell.x2 &&
             cell.X1 == fr.cell.X1 && cell.X2 == fr.cell.X2;
        l += detail::dot(fr.g, rc);
      }
      return l;
    };

    for (std::size_t p = 0; p < net.params().size(); ++p) {
      for (std::size_t j = 0; j < net.params()[p].values.size(); ++j) {
        const double orig = net.params()[p].values[j];
        bool ok = true;
        net.mutable_params()[p].values[j] = orig + h;
        const double lp = linearized(net.forward(feat, Mode::Train), ok);
        net.mutable_params()[p].values[j] = orig - h;
        const double lm = linearized(net.forward(feat, Mode::Train), ok);
        net.mutable_params()[p].values[j] = orig;
        if (!ok) {
          ++s.skipped;
          continue;
        }
        detail::record(s, relative_error(analytic[p][j], (lp - lm) / (2 * h)), opt.rel_tol);
      }
    }
  }
  return s;
}

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt = {}) {
  GradcheckReport r;
  r.suites.push_back(gradcheck_oic_fixtures(opt));
  r.suites.push_back(gradcheck_oic_random(opt));
  r.suites.push_back(gradcheck_oic_smooth(opt));
  r.suites.push_back(gradcheck_boundary(opt));
  r.suites.push_back(gradcheck_regressor(opt));
  r.suites.push_back(gradcheck_end_to_end(opt));
  return r;
}

}  // namespace oicloc
