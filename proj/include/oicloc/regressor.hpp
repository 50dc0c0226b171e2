// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "oicloc/error.hpp"
#include "oicloc/matrix.hpp"

namespace oicloc {

using FeatureMap = MatrixD;  // D x T

/// 2M x T regression values. Row 2m holds t_x and row 2m+1 holds t_w for
/// anchor m (0-based rows). There is no class axis.
using RegressionMap = MatrixD;

struct NetworkConfig {
  int feature_dim = 2048;
  int hidden = 128;
  int hidden_layers = 3;
  int num_anchors = 6;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch

  void validate() const {
    if (feature_dim < 1 || hidden < 1 || hidden_layers < 1 || num_anchors < 1)
      throw ConfigError("network dimensions must be positive");
    if (!(bn_eps > 0.0) || !(bn_momentum >= 0.0 && bn_momentum < 1.0))
      throw ConfigError("invalid batch-norm settings");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool decay = false;  // subject to weight decay

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.name == b.name && a.shape == b.shape && a.values == b.values;
  }
};

/// Gradients laid out exactly like NetworkB::params().
using ParamGrads = std::vector<std::vector<double>>;

enum class Mode { Train, Infer };

struct SgdConfig {
  double lr = 1e-3;
  int lr_step = 200;
  double lr_gamma = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  double rate_at(long iteration) const {
    const long drops = lr_step > 0 ? iteration / lr_step : 0;
    return lr * std::pow(lr_gamma, static_cast<double>(drops));
  }
};

class NetworkB;

/// Intermediates of a train-mode forward, consumed by backward().
struct ForwardCache {
  std::uint64_t generation = 0;
  const NetworkB* owner = nullptr;
  std::size_t length = 0;
  // Per hidden layer: conv input, normalized pre-activation, 1/std, batch
  // mean and biased variance, post-ReLU output.
  std::vector<MatrixD> inputs;
  std::vector<MatrixD> xhat;
  std::vector<std::vector<double>> inv_std;
  std::vector<std::vector<double>> batch_mean;
  std::vector<std::vector<double>> batch_var;
  std::vector<MatrixD> relu_out;
};

struct ForwardResult {
  RegressionMap out;
  ForwardCache cache;  // populated in train mode only
};

namespace detail {

// out(o, t) = sum_i sum_j w[o][i][j] * in(i, t + j - 1), zero padded, k = 3.
inline void conv1d_k3(const MatrixD& in, const std::vector<double>& w, std::size_t n_out,
                      MatrixD& out) {
  const std::size_t n_in = in.rows(), T = in.cols();
  out = MatrixD(n_out, T, 0.0);
  for (std::size_t o = 0; o < n_out; ++o) {
    double* dst = out.row(o).data();
    for (std::size_t i = 0; i < n_in; ++i) {
      const double* src = in.row(i).data();
      const double* k = &w[(o * n_in + i) * 3];
      // tap j reads src[t + j - 1]
      for (std::size_t t = 1; t < T; ++t) dst[t] += k[0] * src[t - 1];
      for (std::size_t t = 0; t < T; ++t) dst[t] += k[1] * src[t];
      for (std::size_t t = 0; t + 1 < T; ++t) dst[t] += k[2] * src[t + 1];
    }
  }
}

// Accumulates dW and returns d(in).
inline MatrixD conv1d_k3_backward(const MatrixD& in, const std::vector<double>& w,
                                  const MatrixD& gout, std::vector<double>& dw) {
  const std::size_t n_in = in.rows(), T = in.cols(), n_out = gout.rows();
  MatrixD gin(n_in, T, 0.0);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double* g = gout.row(o).data();
    for (std::size_t i = 0; i < n_in; ++i) {
      const double* src = in.row(i).data();
      double* dsrc = gin.row(i).data();
      const std::size_t base = (o * n_in + i) * 3;
      double d0 = 0.0, d1 = 0.0, d2 = 0.0;
      for (std::size_t t = 1; t < T; ++t) {
        d0 += g[t] * src[t - 1];
        dsrc[t - 1] += w[base] * g[t];
      }
      for (std::size_t t = 0; t < T; ++t) {
        d1 += g[t] * src[t];
        dsrc[t] += w[base + 1] * g[t];
      }
      for (std::size_t t = 0; t + 1 < T; ++t) {
        d2 += g[t] * src[t + 1];
        dsrc[t + 1] += w[base + 2] * g[t];
      }
      dw[base] += d0;
      dw[base + 1] += d1;
      dw[base + 2] += d2;
    }
  }
  return gin;
}

}  // namespace detail

/// Class-agnostic temporal-convolution boundary regressor.
///
/// `hidden_layers` blocks of conv(k=3, pad=1, no bias) -> batch norm over
/// time -> ReLU, followed by a conv(k=3, pad=1) prediction layer with 2M
/// outputs. Parameters are stored as named tensors in a fixed order:
///   conv{l}.weight, bn{l}.gamma, bn{l}.beta  for l = 1..hidden_layers
///   pred.weight, pred.bias
/// Running statistics live in buffers(): bn{l}.running_mean / running_var.
class NetworkB {
 public:
  NetworkB() = default;

  explicit NetworkB(NetworkConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto H = static_cast<std::size_t>(cfg_.hidden);
    std::size_t in = static_cast<std::size_t>(cfg_.feature_dim);
    for (int l = 1; l <= cfg_.hidden_layers; ++l) {
      const std::string s = std::to_string(l);
      params_.push_back({"conv" + s + ".weight", {H, in, 3}, std::vector<double>(H * in * 3, 0.0), true});
      params_.push_back({"bn" + s + ".gamma", {H}, std::vector<double>(H, 1.0), false});
      params_.push_back({"bn" + s + ".beta", {H}, std::vector<double>(H, 0.0), false});
      buffers_.push_back({"bn" + s + ".running_mean", {H}, std::vector<double>(H, 0.0), false});
      buffers_.push_back({"bn" + s + ".running_var", {H}, std::vector<double>(H, 1.0), false});
      in = H;
    }
    const std::size_t P = 2 * static_cast<std::size_t>(cfg_.num_anchors);
    params_.push_back({"pred.weight", {P, H, 3}, std::vector<double>(P * H * 3, 0.0), true});
    params_.push_back({"pred.bias", {P}, std::vector<double>(P, 0.0), false});
  }

  /// Fan-in scaled uniform init of the hidden convolutions. The prediction
  /// layer stays at zero unless `include_pred`, so an untrained network
  /// reproduces the unregressed anchors.
  void initialize(std::uint64_t seed, bool include_pred = false) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      const bool is_pred = p.name.rfind("pred.", 0) == 0;
      if (p.name.ends_with(".weight") && (!is_pred || include_pred)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(p.shape[1] * p.shape[2]));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& v : p.values) v = u(rng);
      } else if (include_pred && p.name == "pred.bias") {
        std::uniform_real_distribution<double> u(-0.1, 0.1);
        for (double& v : p.values) v = u(rng);
      }
    }
    touch();
  }

  const NetworkConfig& config() const { return cfg_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<Tensor>& buffers() const { return buffers_; }

  /// Mutable access invalidates outstanding forward caches.
  std::vector<Tensor>& mutable_params() {
    touch();
    return params_;
  }
  std::vector<Tensor>& mutable_buffers() {
    touch();
    return buffers_;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.values.size();
    return n;
  }

  std::uint64_t generation() const { return generation_; }

  ParamGrads zero_grads() const {
    ParamGrads g;
    for (const auto& p : params_) g.emplace_back(p.values.size(), 0.0);
    return g;
  }

  ForwardResult forward(const FeatureMap& feat, Mode mode) const {
    if (static_cast<int>(feat.rows()) != cfg_.feature_dim)
      throw ConfigError("feature dim " + std::to_string(feat.rows()) + " does not match network input " +
                        std::to_string(cfg_.feature_dim));
    if (feat.cols() < 1) throw InputError("feature map has no snippets");
    const std::size_t T = feat.cols();
    const std::size_t H = static_cast<std::size_t>(cfg_.hidden);
    ForwardResult res;
    ForwardCache& c = res.cache;
    const bool train = mode == Mode::Train;
    if (train) {
      c.generation = generation_;
      c.owner = this;
      c.length = T;
    }

    MatrixD x = feat;
    for (int l = 0; l < cfg_.hidden_layers; ++l) {
      const auto& w = params_[3 * l].values;
      const auto& gamma = params_[3 * l + 1].values;
      const auto& beta = params_[3 * l + 2].values;
      MatrixD z;
      detail::conv1d_k3(x, w, H, z);
      if (train) c.inputs.push_back(std::move(x));

      MatrixD xh(H, T);
      std::vector<double> mean(H), var(H), inv(H);
      for (std::size_t h = 0; h < H; ++h) {
        auto zr = z.row(h);
        if (train) {
          double m = 0.0;
          for (double v : zr) m += v;
          m /= static_cast<double>(T);
          double s = 0.0;
          for (double v : zr) s += (v - m) * (v - m);
          mean[h] = m;
          var[h] = s / static_cast<double>(T);
        } else {
          mean[h] = buffers_[2 * l].values[h];
          var[h] = buffers_[2 * l + 1].values[h];
        }
        inv[h] = 1.0 / std::sqrt(var[h] + cfg_.bn_eps);
        auto xr = xh.row(h);
        for (std::size_t t = 0; t < T; ++t) xr[t] = (zr[t] - mean[h]) * inv[h];
      }
      MatrixD y(H, T);
      for (std::size_t h = 0; h < H; ++h) {
        auto xr = xh.row(h);
        auto yr = y.row(h);
        for (std::size_t t = 0; t < T; ++t) yr[t] = std::max(0.0, gamma[h] * xr[t] + beta[h]);
      }
      if (train) {
        c.xhat.push_back(std::move(xh));
        c.inv_std.push_back(std::move(inv));
        c.batch_mean.push_back(std::move(mean));
        c.batch_var.push_back(std::move(var));
        c.relu_out.push_back(y);
      }
      x = std::move(y);
    }

    const std::size_t P = 2 * static_cast<std::size_t>(cfg_.num_anchors);
    const Tensor& pw = params_[params_.size() - 2];
    const Tensor& pb = params_[params_.size() - 1];
    detail::conv1d_k3(x, pw.values, P, res.out);
    for (std::size_t p = 0; p < P; ++p)
      for (double& v : res.out.row(p)) v += pb.values[p];
    if (train) c.inputs.push_back(std::move(x));
    return res;
  }

  /// Parameter gradients of sum(grad_out .* forward(feat)) for the cached
  /// train-mode forward.
  ParamGrads backward(const ForwardCache& c, const RegressionMap& grad_out) const {
    if (c.owner != this || c.generation != generation_ || c.inputs.empty())
      throw UsageError("backward needs a train-mode forward of the current parameters");
    const std::size_t P = 2 * static_cast<std::size_t>(cfg_.num_anchors);
    if (grad_out.rows() != P || grad_out.cols() != c.length)
      throw UsageError("grad_out shape does not match the cached forward");
    const std::size_t T = c.length;
    const std::size_t H = static_cast<std::size_t>(cfg_.hidden);
    ParamGrads grads = zero_grads();

    auto& gpb = grads[params_.size() - 1];
    for (std::size_t p = 0; p < P; ++p)
      for (double v : grad_out.row(p)) gpb[p] += v;
    MatrixD g = detail::conv1d_k3_backward(c.inputs.back(), params_[params_.size() - 2].values,
                                           grad_out, grads[params_.size() - 2]);

    for (int l = cfg_.hidden_layers - 1; l >= 0; --l) {
      const auto lu = static_cast<std::size_t>(l);
      const auto& gamma = params_[3 * lu + 1].values;
      auto& dgamma = grads[3 * lu + 1];
      auto& dbeta = grads[3 * lu + 2];
      const MatrixD& xh = c.xhat[lu];
      const MatrixD& y = c.relu_out[lu];
      MatrixD dz(H, T);
      const double n = static_cast<double>(T);
      for (std::size_t h = 0; h < H; ++h) {
        auto gr = g.row(h);
        auto yr = y.row(h);
        auto xr = xh.row(h);
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        std::vector<double> dxh(T);
        for (std::size_t t = 0; t < T; ++t) {
          const double dy = yr[t] > 0.0 ? gr[t] : 0.0;
          dgamma[h] += dy * xr[t];
          dbeta[h] += dy;
          dxh[t] = dy * gamma[h];
          sum_dxh += dxh[t];
          sum_dxh_xh += dxh[t] * xr[t];
        }
        auto dzr = dz.row(h);
        const double inv = c.inv_std[lu][h];
        for (std::size_t t = 0; t < T; ++t)
          dzr[t] = inv / n * (n * dxh[t] - sum_dxh - xr[t] * sum_dxh_xh);
      }
      g = detail::conv1d_k3_backward(c.inputs[lu], params_[3 * lu].values, dz, grads[3 * lu]);
    }
    return grads;
  }

  /// Fold the batch statistics of a train-mode forward into the running stats.
  void absorb_batch_stats(const ForwardCache& c) {
    if (c.owner != this || c.generation != generation_)
      throw UsageError("batch statistics come from a stale forward");
    const double m = cfg_.bn_momentum;
    const double n = static_cast<double>(c.length);
    const double unbias = c.length > 1 ? n / (n - 1.0) : 1.0;
    for (std::size_t l = 0; l < c.batch_mean.size(); ++l) {
      auto& rm = buffers_[2 * l].values;
      auto& rv = buffers_[2 * l + 1].values;
      for (std::size_t h = 0; h < rm.size(); ++h) {
        rm[h] = m * rm[h] + (1.0 - m) * c.batch_mean[l][h];
        rv[h] = m * rv[h] + (1.0 - m) * c.batch_var[l][h] * unbias;
      }
    }
    // Running stats do not affect train-mode outputs, so caches stay valid.
  }

  friend bool operator==(const NetworkB& a, const NetworkB& b) {
    return a.cfg_ == b.cfg_ && a.params_ == b.params_ && a.buffers_ == b.buffers_;
  }

 private:
  void touch() { ++generation_; }

  NetworkConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<Tensor> buffers_;
  std::uint64_t generation_ = 0;
};

/// Momentum SGD with step-decayed learning rate and L2 weight decay on
/// convolution weights. One iteration is one video.
class SgdOptimizer {
 public:
  SgdOptimizer() = default;
  explicit SgdOptimizer(SgdConfig cfg) : cfg_(cfg) {}

  const SgdConfig& config() const { return cfg_; }
  long iteration() const { return iteration_; }
  const ParamGrads& velocity() const { return velocity_; }

  void restore(long iteration, ParamGrads velocity) {
    iteration_ = iteration;
    velocity_ = std::move(velocity);
  }

  double current_rate() const { return cfg_.rate_at(iteration_); }

  void step(NetworkB& net, const ParamGrads& grads) {
    const auto& params = net.params();
    if (grads.size() != params.size()) throw UsageError("gradient layout does not match network");
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (grads[i].size() != params[i].values.size())
        throw UsageError("gradient layout does not match network");
      for (double v : grads[i]) {
        if (!std::isfinite(v))
          throw TrainingError("non-finite gradient in " + params[i].name + " at iteration " +
                              std::to_string(iteration_));
      }
    }
    if (velocity_.empty()) velocity_ = net.zero_grads();
    const double lr = current_rate();
    auto& mp = net.mutable_params();
    for (std::size_t i = 0; i < mp.size(); ++i) {
      auto& p = mp[i].values;
      auto& v = velocity_[i];
      const double wd = mp[i].decay ? cfg_.weight_decay : 0.0;
      for (std::size_t j = 0; j < p.size(); ++j) {
        v[j] = cfg_.momentum * v[j] + lr * (grads[i][j] + wd * p[j]);
        p[j] -= v[j];
      }
    }
    ++iteration_;
  }

 private:
  SgdConfig cfg_;
  long iteration_ = 0;
  ParamGrads velocity_;
};

}  // namespace oicloc
