#pragma once

// Context encoder e_eta: a per-transition MLP from (s, a, s', r) to a diagonal
// Gaussian over the task representation z, its KL bottleneck, and the
// transition decoder that gives z its predictive content.

#include <cmath>
#include <vector>

#include "wisdom/envs.hpp"
#include "wisdom/nn.hpp"

namespace wisdom {

inline constexpr double kEncoderLogStdMin = -10.0;
inline constexpr double kEncoderLogStdMax = 2.0;

struct LatentSequence {
  Tensor mean;     ///< [L x D]
  Tensor log_std;  ///< [L x D], clamped
  Tensor sample;   ///< [L x D]
  std::size_t latent_dim() const { return mean.cols(); }
};

/// Running per-feature mean/variance (Welford); frozen values are used to
/// standardise encoder and decoder inputs.
class RunningNorm {
 public:
  RunningNorm() = default;
  explicit RunningNorm(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  void update(const Vec& x) {
    if (x.size() != mean_.size()) throw DimensionError("RunningNorm: feature dimension mismatch");
    ++count_;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean_[i];
      mean_[i] += d / static_cast<double>(count_);
      m2_[i] += d * (x[i] - mean_[i]);
    }
  }

  double mean(std::size_t i) const { return mean_[i]; }
  double stddev(std::size_t i) const {
    if (count_ < 2) return 1.0;
    const double sd = std::sqrt(m2_[i] / static_cast<double>(count_ - 1));
    return sd > 1e-6 ? sd : 1.0;
  }

  void normalize_inplace(double* x) const {
    if (!enabled_) return;
    for (std::size_t i = 0; i < mean_.size(); ++i) x[i] = (x[i] - mean(i)) / stddev(i);
  }
  double normalize(std::size_t i, double x) const { return enabled_ ? (x - mean(i)) / stddev(i) : x; }

  std::size_t dim() const { return mean_.size(); }
  std::uint64_t count() const { return count_; }
  bool enabled() const { return enabled_; }
  void set_enabled(bool e) { enabled_ = e; }

  // serialisation access
  const Vec& raw_mean() const { return mean_; }
  const Vec& raw_m2() const { return m2_; }
  void restore(std::uint64_t count, Vec mean, Vec m2) {
    if (mean.size() != mean_.size() || m2.size() != m2_.size()) throw DimensionError("RunningNorm: restore size");
    count_ = count;
    mean_ = std::move(mean);
    m2_ = std::move(m2);
  }

 private:
  std::uint64_t count_ = 0;
  Vec mean_, m2_;
  bool enabled_ = true;
};

/// Input feature layout of the encoder: [s, a, s' - s, r]. The next state
/// enters as a difference (an invertible reparametrisation given s) so that
/// per-feature standardisation puts the state change itself at unit scale;
/// task effects on dynamics are typically small changes of s' - s.
inline std::size_t transition_feature_dim(std::size_t obs_dim, std::size_t act_dim) {
  return 2 * obs_dim + act_dim + 1;
}

inline Vec transition_features(const Transition& t) {
  Vec f;
  f.reserve(2 * t.s.size() + t.a.size() + 1);
  f.insert(f.end(), t.s.begin(), t.s.end());
  f.insert(f.end(), t.a.begin(), t.a.end());
  for (std::size_t i = 0; i < t.s.size(); ++i) f.push_back(t.s_next[i] - t.s[i]);
  f.push_back(t.r);
  return f;
}

class ContextEncoder {
 public:
  ContextEncoder() = default;
  ContextEncoder(std::size_t obs_dim, std::size_t act_dim, std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                 Rng& rng)
      : obs_dim_(obs_dim),
        act_dim_(act_dim),
        latent_dim_(latent_dim),
        mlp_(transition_feature_dim(obs_dim, act_dim), hidden, 2 * latent_dim, rng) {}

  std::size_t input_dim() const { return transition_feature_dim(obs_dim_, act_dim_); }
  std::size_t latent_dim() const { return latent_dim_; }

  /// features: [L x input_dim] (already normalised); noise: [L x D] standard
  /// normal draws, or undefined for the posterior mean.
  LatentSequence encode(const Tensor& features, const Tensor& noise = Tensor()) const {
    if (features.shape().size() != 2 || features.cols() != input_dim())
      throw DimensionError("encode: expected [L x " + std::to_string(input_dim()) + "] features, got " +
                           shape_str(features.shape()));
    Tensor out = mlp_.forward(features);
    LatentSequence z;
    z.mean = slice_cols(out, 0, latent_dim_);
    z.log_std = clamp(slice_cols(out, latent_dim_, 2 * latent_dim_), kEncoderLogStdMin, kEncoderLogStdMax);
    if (noise.defined()) {
      if (noise.shape() != z.mean.shape()) throw DimensionError("encode: noise shape " + shape_str(noise.shape()));
      z.sample = gaussian_rsample(z.mean, z.log_std, noise);
    } else {
      z.sample = z.mean;
    }
    return z;
  }

  ParamList params() const { return mlp_.params(); }

 private:
  std::size_t obs_dim_ = 0, act_dim_ = 0, latent_dim_ = 0;
  Mlp mlp_;
};

/// Mean over rows of KL(N(mu, sigma^2) || N(0, I)) = 1/2 sum_d (mu^2 + sigma^2 - 1 - 2 log sigma).
/// `row_weights` ([L x 1], optional) masks padded rows; the mean is over weighted rows.
inline Tensor kl_loss(const LatentSequence& z, const Tensor& row_weights = Tensor()) {
  Tensor per_elem = square(z.mean) + exp(scale(z.log_std, 2.0)) + (-1.0) - scale(z.log_std, 2.0);
  Tensor per_row = scale(row_sum(per_elem), 0.5);  // [L x 1]
  if (!row_weights.defined()) return mean(per_row);
  double w = 0;
  for (double x : row_weights.data()) w += x;
  if (w <= 0.0) return Tensor::scalar(0.0);
  return scale(sum(mul(per_row, row_weights)), 1.0 / w);
}

/// Predicts the normalised (s' - s, r) of transition i from (s_i, a_i, context):
///   MLP(s, a, c) + A [s, a, c] + B (c (x) [s, a])
/// The linear path covers plain linear effects; the bilinear path lets the
/// context modulate the local (s, a) -> outcome map directly, which is how
/// most hidden task parameters act (damping, gains, targets). The MLP
/// captures the rest.
class TransitionDecoder {
 public:
  TransitionDecoder() = default;
  TransitionDecoder(std::size_t obs_dim, std::size_t act_dim, std::size_t ctx_dim, const std::vector<std::size_t>& hidden,
                    Rng& rng)
      : sa_(obs_dim + act_dim),
        ctx_(ctx_dim),
        in_(obs_dim + act_dim + ctx_dim),
        out_(obs_dim + 1),
        mlp_(in_, hidden, out_, rng),
        skip_(in_, out_, rng, false),
        bilinear_(ctx_dim * (obs_dim + act_dim), out_, rng, false) {
    for (std::size_t d = 0; d < ctx_; ++d)
      for (std::size_t k = 0; k < sa_; ++k) {
        ctx_cols_.push_back(static_cast<std::int64_t>(sa_ + d));
        sa_cols_.push_back(static_cast<std::int64_t>(k));
      }
  }

  std::size_t input_dim() const { return in_; }
  std::size_t output_dim() const { return out_; }

  /// Row-wise outer product c (x) [s, a] as [N x D*(S+A)].
  Tensor outer_features(const Tensor& inputs) const {
    const std::size_t N = inputs.rows(), W = ctx_cols_.size();
    std::vector<std::int64_t> ic(N * W), is(N * W);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < W; ++j) {
        ic[n * W + j] = static_cast<std::int64_t>(n * in_) + ctx_cols_[j];
        is[n * W + j] = static_cast<std::int64_t>(n * in_) + sa_cols_[j];
      }
    return mul(gather(inputs, {N, W}, std::move(ic)), gather(inputs, {N, W}, std::move(is)));
  }

  Tensor forward(const Tensor& inputs) const {
    if (inputs.shape().size() != 2 || inputs.cols() != in_)
      throw DimensionError("decoder: expected [N x " + std::to_string(in_) + "] inputs, got " + shape_str(inputs.shape()));
    Tensor out = mlp_.forward(inputs) + skip_.forward(inputs);
    if (ctx_ > 0 && sa_ > 0) out = out + bilinear_.forward(outer_features(inputs));
    return out;
  }

  /// 1/2 * weighted mean over rows of the squared error summed over outputs.
  Tensor loss(const Tensor& inputs, const Tensor& targets, const Tensor& row_weights = Tensor()) const {
    Tensor err = row_sum(square(forward(inputs) - targets));
    if (!row_weights.defined()) return scale(mean(err), 0.5);
    double w = 0;
    for (double x : row_weights.data()) w += x;
    if (w <= 0.0) return Tensor::scalar(0.0);
    return scale(sum(mul(err, row_weights)), 0.5 / w);
  }

  ParamList params() const {
    ParamList p;
    append_params(p, "mlp.", mlp_.params());
    append_params(p, "skip.", skip_.params());
    if (ctx_ > 0 && sa_ > 0) append_params(p, "bilinear.", bilinear_.params());
    return p;
  }

 private:
  std::size_t sa_ = 0, ctx_ = 0, in_ = 0, out_ = 0;
  Mlp mlp_;
  Linear skip_;
  Linear bilinear_;
  std::vector<std::int64_t> ctx_cols_, sa_cols_;
};

}  // namespace wisdom
