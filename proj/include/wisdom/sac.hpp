#pragma once

// Soft actor-critic conditioned on the task representation zhat: a
// tanh-squashed Gaussian policy pi(a | s, zhat), twin critics Q(s, a, zhat)
// with soft-updated target copies, and automatic temperature tuning.

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "wisdom/nn.hpp"

namespace wisdom {

inline constexpr double kPolicyLogStdMin = -20.0;
inline constexpr double kPolicyLogStdMax = 2.0;

/// log(1 - tanh(u)^2) computed stably as 2 (log 2 - u - softplus(-2u)).
inline Tensor log_tanh_jacobian(const Tensor& u) {
  return scale(add_scalar(neg(u), std::numbers::ln2) - softplus(scale(u, -2.0)), 2.0);
}

struct PolicySample {
  Tensor action;    ///< [N x A], tanh-squashed
  Tensor log_prob;  ///< [N x 1]
};

class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(std::size_t obs_dim, std::size_t ctx_dim, std::size_t act_dim, const std::vector<std::size_t>& hidden,
                 Rng& rng)
      : obs_dim_(obs_dim), ctx_dim_(ctx_dim), act_dim_(act_dim), mlp_(obs_dim + ctx_dim, hidden, 2 * act_dim, rng) {}

  std::size_t action_dim() const { return act_dim_; }
  std::size_t input_dim() const { return obs_dim_ + ctx_dim_; }

  /// Pre-squash mean and clamped log-std for inputs [N x (S + D)].
  std::pair<Tensor, Tensor> distribution(const Tensor& inputs) const {
    Tensor out = mlp_.forward(inputs);
    return {slice_cols(out, 0, act_dim_), clamp(slice_cols(out, act_dim_, 2 * act_dim_), kPolicyLogStdMin, kPolicyLogStdMax)};
  }

  /// Reparameterised sample with standard-normal `noise` [N x A].
  PolicySample sample(const Tensor& inputs, const Tensor& noise) const {
    auto [mu, log_std] = distribution(inputs);
    Tensor u = gaussian_rsample(mu, log_std, noise);
    Tensor gauss = scale(square(noise), -0.5) - log_std + (-0.5 * std::log(2.0 * std::numbers::pi));
    Tensor logp = row_sum(gauss - log_tanh_jacobian(u));
    return {tanh(u), logp};
  }

  Tensor deterministic(const Tensor& inputs) const { return tanh(distribution(inputs).first); }

  ParamList params() const { return mlp_.params(); }

 private:
  std::size_t obs_dim_ = 0, ctx_dim_ = 0, act_dim_ = 0;
  Mlp mlp_;
};

class TwinCritic {
 public:
  TwinCritic() = default;
  TwinCritic(std::size_t in_dim, const std::vector<std::size_t>& hidden, Rng& rng)
      : q1_(in_dim, hidden, 1, rng), q2_(in_dim, hidden, 1, rng) {}

  std::pair<Tensor, Tensor> forward(const Tensor& inputs) const { return {q1_.forward(inputs), q2_.forward(inputs)}; }
  Tensor min_q(const Tensor& inputs) const {
    auto [a, b] = forward(inputs);
    return minimum(a, b);
  }

  ParamList params() const {
    ParamList p;
    append_params(p, "q1.", q1_.params());
    append_params(p, "q2.", q2_.params());
    return p;
  }

  void swap_heads() { std::swap(q1_, q2_); }

 private:
  Mlp q1_, q2_;
};

struct SacOptions {
  std::vector<std::size_t> hidden{300, 300, 300};
  double lr = 3e-4;
  double gamma = 0.99;
  double tau = 5e-3;
  double init_log_alpha = 0.0;
  double target_entropy_factor = 1.0;
};

/// Batch of transitions with their task representations. All [B x .].
struct SacBatch {
  Tensor s, a, r, s_next, done, ctx, ctx_next;
  std::size_t size() const { return s.rows(); }
};

struct SacStats {
  double critic_loss = 0, actor_loss = 0, alpha_loss = 0, alpha = 0, entropy = 0;
};

class ContextualSAC {
 public:
  ContextualSAC() = default;
  ContextualSAC(std::size_t obs_dim, std::size_t ctx_dim, std::size_t act_dim, SacOptions opt, Rng& rng)
      : obs_dim_(obs_dim), ctx_dim_(ctx_dim), act_dim_(act_dim), opt_(std::move(opt)) {
    policy_ = GaussianPolicy(obs_dim, ctx_dim, act_dim, opt_.hidden, rng);
    critic_ = TwinCritic(obs_dim + act_dim + ctx_dim, opt_.hidden, rng);
    Rng dummy(0);
    target_ = TwinCritic(obs_dim + act_dim + ctx_dim, opt_.hidden, dummy);
    ParamList src = critic_.params(), dst = target_.params();
    copy_params(src, dst);
    for (auto& [_, t] : dst) t.set_requires_grad(false);
    log_alpha_ = Tensor::scalar(opt_.init_log_alpha, true);
    target_entropy_ = -static_cast<double>(act_dim) * opt_.target_entropy_factor;
    AdamOptions ao;
    ao.lr = opt_.lr;
    actor_opt_ = Adam(policy_.params(), ao);
    critic_opt_ = Adam(critic_.params(), ao);
    alpha_opt_ = Adam({{"log_alpha", log_alpha_}}, ao);
  }

  double alpha() const { return std::exp(log_alpha_.item()); }
  double target_entropy() const { return target_entropy_; }
  const SacOptions& options() const { return opt_; }
  GaussianPolicy& policy() { return policy_; }
  const GaussianPolicy& policy() const { return policy_; }
  TwinCritic& critic() { return critic_; }
  TwinCritic& target_critic() { return target_; }
  Tensor& log_alpha() { return log_alpha_; }
  Adam& actor_optimizer() { return actor_opt_; }
  Adam& critic_optimizer() { return critic_opt_; }
  Adam& alpha_optimizer() { return alpha_opt_; }
  const Adam& actor_optimizer() const { return actor_opt_; }
  const Adam& critic_optimizer() const { return critic_opt_; }
  const Adam& alpha_optimizer() const { return alpha_opt_; }

  static Tensor policy_inputs(const Tensor& s, const Tensor& ctx) { return concat_cols({s, ctx}); }
  static Tensor critic_inputs(const Tensor& s, const Tensor& a, const Tensor& ctx) { return concat_cols({s, a, ctx}); }

  /// Bootstrap target r + gamma (1 - done) (min_l Q_target(s', a') - alpha log pi(a'|s')), no grad.
  Tensor critic_target(const SacBatch& b, const Tensor& next_noise, double gamma) const {
    NoGradGuard ng;
    auto next = policy_.sample(policy_inputs(b.s_next, b.ctx_next), next_noise);
    Tensor q_next = target_.min_q(critic_inputs(b.s_next, next.action, b.ctx_next));
    Tensor soft = q_next - scale(next.log_prob, alpha());
    Tensor not_done = add_scalar(neg(b.done), 1.0);
    return b.r + scale(mul(not_done, soft), gamma);
  }

  /// sum_l 1/2 mean (Q_l(s, a, zhat) - y)^2
  Tensor critic_loss(const SacBatch& b, const Tensor& next_noise, double gamma) const {
    if (!(gamma >= 0.0) || gamma > 1.0) throw ParameterError("gamma must lie in [0, 1]");
    Tensor y = critic_target(b, next_noise, gamma);
    auto [q1, q2] = critic_.forward(critic_inputs(b.s, b.a, b.ctx));
    return scale(mean(square(q1 - y)) + mean(square(q2 - y)), 0.5);
  }

  struct ActorOut {
    Tensor loss;
    Tensor log_prob;  ///< detached
    /// Keeps the critics frozen until released, so that loss.backward()
    /// deposits gradient into the policy only.
    std::shared_ptr<FreezeGuard> freeze;
  };
  /// mean(alpha log pi(a|s) - min_l Q_l(s, a)) with the critics frozen while
  /// the returned value is alive.
  ActorOut actor_loss(const SacBatch& b, const Tensor& noise) {
    auto freeze = std::make_shared<FreezeGuard>(critic_.params());
    auto smp = policy_.sample(policy_inputs(b.s, b.ctx), noise);
    Tensor q = critic_.min_q(critic_inputs(b.s, smp.action, b.ctx));
    return {mean(scale(smp.log_prob, alpha()) - q), detach(smp.log_prob), std::move(freeze)};
  }

  static Tensor temperature_loss(const Tensor& log_alpha, const Tensor& log_probs, double target_entropy) {
    return mean(mul(neg(exp(log_alpha)), add_scalar(detach(log_probs), target_entropy)));
  }

  void soft_update_targets() {
    ParamList dst = target_.params();
    soft_update(critic_.params(), dst, opt_.tau);
  }

  /// One full SAC step: critic, actor, temperature, target soft update.
  SacStats update(const SacBatch& b, Rng& rng) {
    SacStats st;
    const std::size_t B = b.size();
    Tensor next_noise({B, act_dim_}, normal_vector(rng, B * act_dim_));
    Tensor noise({B, act_dim_}, normal_vector(rng, B * act_dim_));

    critic_opt_.zero_grad();
    Tensor cl = critic_loss(b, next_noise, opt_.gamma);
    cl.backward();
    critic_opt_.step();
    st.critic_loss = cl.item();

    actor_opt_.zero_grad();
    auto al = actor_loss(b, noise);
    al.loss.backward();
    al.freeze.reset();
    actor_opt_.step();
    st.actor_loss = al.loss.item();

    alpha_opt_.zero_grad();
    Tensor tl = temperature_loss(log_alpha_, al.log_prob, target_entropy_);
    tl.backward();
    alpha_opt_.step();
    st.alpha_loss = tl.item();
    st.alpha = alpha();
    st.entropy = -mean(al.log_prob).item();

    soft_update_targets();
    return st;
  }

  /// Action for a single state. Deterministic mode returns tanh(mean).
  Vec act(const Vec& s, const Vec& ctx, bool deterministic, Rng& rng) const {
    NoGradGuard ng;
    Vec in = s;
    in.insert(in.end(), ctx.begin(), ctx.end());
    const std::size_t n = in.size();
    Tensor x({1, n}, std::move(in));
    Tensor a = deterministic ? policy_.deterministic(x)
                             : policy_.sample(x, Tensor({1, act_dim_}, normal_vector(rng, act_dim_))).action;
    return Vec(a.data().begin(), a.data().end());
  }

  /// Everything to checkpoint, keyed by name.
  ParamList state() const {
    ParamList p;
    append_params(p, "policy.", policy_.params());
    append_params(p, "critic.", critic_.params());
    append_params(p, "critic_target.", target_.params());
    p.emplace_back("log_alpha", log_alpha_);
    return p;
  }

 private:
  std::size_t obs_dim_ = 0, ctx_dim_ = 0, act_dim_ = 0;
  SacOptions opt_;
  GaussianPolicy policy_;
  TwinCritic critic_, target_;
  Tensor log_alpha_;
  double target_entropy_ = 0.0;
  Adam actor_opt_, critic_opt_, alpha_opt_;
};

}  // namespace wisdom
