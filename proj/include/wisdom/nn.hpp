#pragma once

// Layers, parameter bookkeeping and the Adam optimizer on top of tensor.hpp.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "wisdom/rng.hpp"
#include "wisdom/tensor.hpp"

namespace wisdom {

/// Named handles onto parameter tensors. Copies share storage with the owner.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

inline void append_params(ParamList& out, const std::string& prefix, const ParamList& in) {
  for (const auto& [name, t] : in) out.emplace_back(prefix + name, t);
}

inline void zero_grad(ParamList& params) {
  for (auto& [_, t] : params) t.zero_grad();
}

/// Copies values of `src` into `dst` (same names, same shapes).
inline void copy_params(const ParamList& src, ParamList& dst) {
  if (src.size() != dst.size()) throw DimensionError("copy_params: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].second.shape() != dst[i].second.shape())
      throw DimensionError("copy_params: " + src[i].first + " shape mismatch");
    auto s = src[i].second.data();
    auto d = dst[i].second.mutable_data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

/// target <- sigma * online + (1 - sigma) * target.
inline void soft_update(const ParamList& online, ParamList& target, double sigma) {
  if (online.size() != target.size()) throw DimensionError("soft_update: parameter count mismatch");
  for (std::size_t i = 0; i < online.size(); ++i) {
    auto s = online[i].second.data();
    auto d = target[i].second.mutable_data();
    if (s.size() != d.size()) throw DimensionError("soft_update: " + online[i].first + " size mismatch");
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = sigma * s[j] + (1.0 - sigma) * d[j];
  }
}

/// Temporarily stops gradient recording into a set of parameters.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamList params) : params_(std::move(params)) {
    for (auto& [_, t] : params_) {
      prev_.push_back(t.requires_grad());
      t.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].second.set_requires_grad(prev_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamList params_;
  std::vector<bool> prev_;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true, double init_scale = -1.0) : in_(in), out_(out) {
    const double bound = init_scale > 0.0 ? init_scale : 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(in * out);
    for (auto& x : w) x = dist(rng);
    weight_ = Tensor({in, out}, std::move(w), true);
    if (bias) {
      std::vector<double> b(out);
      for (auto& x : b) x = dist(rng);
      bias_ = Tensor({out}, std::move(b), true);
    }
  }

  Tensor forward(const Tensor& x) const {
    Tensor y = matmul(x, weight_);
    return bias_.defined() ? add_bias(y, bias_) : y;
  }

  ParamList params() const {
    ParamList p{{"weight", weight_}};
    if (bias_.defined()) p.emplace_back("bias", bias_);
    return p;
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Tensor weight_, bias_;
};

/// ReLU multilayer perceptron with a linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng,
      double last_layer_scale = -1.0) {
    std::size_t prev = in;
    for (auto h : hidden) {
      layers_.emplace_back(prev, h, rng);
      prev = h;
    }
    layers_.emplace_back(prev, out, rng, true, last_layer_scale);
  }

  Tensor forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].forward(h);
      if (i + 1 < layers_.size()) h = relu(h);
    }
    return h;
  }

  ParamList params() const {
    ParamList p;
    for (std::size_t i = 0; i < layers_.size(); ++i) append_params(p, "fc" + std::to_string(i) + ".", layers_[i].params());
    return p;
  }

  std::size_t in_features() const { return layers_.front().in_features(); }
  std::size_t out_features() const { return layers_.back().out_features(); }

 private:
  std::vector<Linear> layers_;
};

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m, v;
};

/// One bias-corrected Adam update of `param` from its accumulated grad.
/// `step` is the 1-based update count. A param with no grad is left untouched.
inline void adam_step(Tensor& param, AdamMoments& mom, const AdamOptions& opt, std::uint64_t step) {
  if (!param.has_grad()) return;
  auto w = param.mutable_data();
  auto g = param.grad();
  if (mom.m.size() != w.size()) {
    mom.m.assign(w.size(), 0.0);
    mom.v.assign(w.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < w.size(); ++i) {
    mom.m[i] = opt.beta1 * mom.m[i] + (1.0 - opt.beta1) * g[i];
    mom.v[i] = opt.beta2 * mom.v[i] + (1.0 - opt.beta2) * g[i] * g[i];
    w[i] -= opt.lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + opt.eps);
  }
}

class Adam {
 public:
  Adam() = default;
  Adam(ParamList params, AdamOptions opt = {}) : params_(std::move(params)), opt_(opt), moments_(params_.size()) {}

  void zero_grad() { wisdom::zero_grad(params_); }
  void step() {
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) adam_step(params_[i].second, moments_[i], opt_, steps_);
  }

  const ParamList& params() const { return params_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }
  std::vector<AdamMoments>& moments() { return moments_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

 private:
  ParamList params_;
  AdamOptions opt_;
  std::vector<AdamMoments> moments_;
  std::uint64_t steps_ = 0;
};

}  // namespace wisdom
