#pragma once

// The WISDOM agent: context encoder, wavelet representation network Y_phi,
// W network (+ target), transition decoder and the contextual SAC, plus the
// two training steps that touch them (representation and policy) and the
// online context used when acting.
//
// Context alignment: transition i is paired with the representation of the
// window ending at transition i-1 (zero at the episode start), and its s'
// with the window ending at i. That is exactly what the agent sees when it
// acts.

#include <algorithm>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "wisdom/checkpoint.hpp"
#include "wisdom/config.hpp"
#include "wisdom/encoder.hpp"
#include "wisdom/replay.hpp"
#include "wisdom/sac.hpp"
#include "wisdom/wavelet_repr.hpp"

namespace wisdom {

struct ReprLosses {
  double kl = 0, decoder = 0, td = 0, ar = 0, total = 0;
};

namespace detail {

inline void save_adam(Checkpoint& ck, nlohmann::json& meta, const std::string& prefix, const Adam& opt) {
  meta[prefix + "steps"] = opt.steps();
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = opt.moments()[i];
    if (m.m.empty()) continue;
    ck.add(prefix + params[i].first + ".m", m.m);
    ck.add(prefix + params[i].first + ".v", m.v);
  }
}

inline void load_adam(const Checkpoint& ck, const nlohmann::json& meta, const std::string& prefix, Adam& opt) {
  opt.set_steps(meta.at(prefix + "steps").get<std::uint64_t>());
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = opt.moments()[i];
    const std::string key = prefix + params[i].first;
    if (ck.has(key + ".m")) {
      m.m = ck.at(key + ".m").data;
      m.v = ck.at(key + ".v").data;
    } else {
      m.m.clear();
      m.v.clear();
    }
  }
}

inline void save_norm(Checkpoint& ck, nlohmann::json& meta, const std::string& prefix, const RunningNorm& n) {
  meta[prefix + "count"] = n.count();
  ck.add(prefix + "mean", n.raw_mean());
  ck.add(prefix + "m2", n.raw_m2());
}

inline void load_norm(const Checkpoint& ck, const nlohmann::json& meta, const std::string& prefix, RunningNorm& n) {
  n.restore(meta.at(prefix + "count").get<std::uint64_t>(), ck.at(prefix + "mean").data, ck.at(prefix + "m2").data);
}

}  // namespace detail

class WisdomAgent {
 public:
  WisdomAgent(const ExperimentConfig& cfg, std::size_t obs_dim, std::size_t act_dim)
      : repr_cfg_(cfg.repr),
        ablation_(cfg.ablation),
        obs_dim_(obs_dim),
        act_dim_(act_dim),
        D_(cfg.repr.latent_dim),
        feat_norm_(transition_feature_dim(obs_dim, act_dim)),
        target_norm_(obs_dim + 1) {
    Rng init = make_rng(cfg.seed, "init");
    encoder_ = ContextEncoder(obs_dim, act_dim, D_, repr_cfg_.encoder_hidden, init);
    WaveletReprOptions yo;
    yo.window = repr_cfg_.window;
    yo.levels = repr_cfg_.levels;
    yo.keep_fraction = repr_cfg_.keep_fraction;
    yo.filter_length = repr_cfg_.filter_length;
    yo.trainable_filters = repr_cfg_.trainable_filters;
    ynet_ = WaveletReprNet(D_, yo);
    W_ = WNetwork(ynet_.bank().y0, yo.window, yo.levels, D_, repr_cfg_.w_hidden, init);
    W_target_ = W_.make_target();
    decoder_ = TransitionDecoder(obs_dim, act_dim, D_, repr_cfg_.decoder_hidden, init);
    SacOptions so;
    so.hidden = cfg.sac.hidden;
    so.lr = cfg.sac.lr;
    so.gamma = cfg.sac.gamma;
    so.tau = cfg.sac.tau;
    so.init_log_alpha = cfg.sac.init_log_alpha;
    so.target_entropy_factor = cfg.sac.target_entropy_factor;
    sac_ = ContextualSAC(obs_dim, D_, act_dim, so, init);
    AdamOptions ao;
    ao.lr = repr_cfg_.lr;
    repr_opt_ = Adam(representation_params(), ao);
  }

  WisdomAgent(const WisdomAgent&) = delete;
  WisdomAgent& operator=(const WisdomAgent&) = delete;

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  std::size_t ctx_dim() const { return D_; }
  Ablation ablation() const { return ablation_; }
  bool uses_encoder() const { return ablation_ != Ablation::PlainSac; }
  bool uses_ynet() const { return ablation_ == Ablation::Full || ablation_ == Ablation::AlphaY0; }
  bool uses_td() const { return ablation_ == Ablation::Full && repr_cfg_.alpha_y > 0.0; }
  std::size_t window() const { return repr_cfg_.window; }

  const ContextEncoder& encoder() const { return encoder_; }
  const WaveletReprNet& ynet() const { return ynet_; }
  const WNetwork& w_net() const { return W_; }
  const WNetwork& w_target() const { return W_target_; }
  const TransitionDecoder& decoder() const { return decoder_; }
  ContextualSAC& sac() { return sac_; }
  const ContextualSAC& sac() const { return sac_; }
  const RunningNorm& feature_norm() const { return feat_norm_; }

  /// Everything the representation phase trains (y0 appears once: Y and W share it).
  ParamList representation_params() const {
    ParamList p;
    append_params(p, "encoder.", encoder_.params());
    append_params(p, "decoder.", decoder_.params());
    append_params(p, "ynet.", ynet_.params());
    append_params(p, "w.head.", W_.head_params());
    return p;
  }
  ParamList policy_params() const { return sac_.state(); }

  /// Feature statistics are refreshed from newly collected transitions only,
  /// so they stay fixed within each training phase.
  void update_normalizers(const std::vector<Transition>& ts) {
    for (const auto& t : ts) {
      feat_norm_.update(transition_features(t));
      target_norm_.update(decoder_target(t));
    }
  }

  Vec normalized_features(const Transition& t) const {
    Vec f = transition_features(t);
    feat_norm_.normalize_inplace(f.data());
    return f;
  }

  Vec decoder_target(const Transition& t) const {
    Vec y(obs_dim_ + 1);
    for (std::size_t i = 0; i < obs_dim_; ++i) y[i] = t.s_next[i] - t.s[i];
    y[obs_dim_] = t.r;
    return y;
  }

  /// Posterior-mean latents for transitions [begin, end) of a stream, [n x D].
  Tensor encode_means(const std::vector<Transition>& ts, std::size_t begin, std::size_t end) const {
    NoGradGuard ng;
    const std::size_t n = end - begin, F = encoder_.input_dim();
    Vec feats;
    feats.reserve(n * F);
    for (std::size_t i = begin; i < end; ++i) {
      Vec f = normalized_features(ts[i]);
      feats.insert(feats.end(), f.begin(), f.end());
    }
    return detach(encoder_.encode(Tensor({n, F}, std::move(feats))).mean);
  }

  /// Context from the most recent latents (oldest first, at most L of them).
  Vec context_from_latents(const std::deque<Vec>& recent) const {
    if (!uses_encoder() || recent.empty()) return Vec(D_, 0.0);
    if (!uses_ynet()) return recent.back();
    NoGradGuard ng;
    const std::size_t L = repr_cfg_.window;
    Vec w(L * D_, 0.0);
    const std::size_t n = std::min(L, recent.size());
    for (std::size_t k = 0; k < n; ++k) {
      const Vec& z = recent[recent.size() - n + k];
      std::copy(z.begin(), z.end(), w.begin() + static_cast<std::ptrdiff_t>((L - n + k) * D_));
    }
    Tensor zh = ynet_.forward_windows(Tensor({L, D_}, std::move(w)), 1).zhat;
    return Vec(zh.data().begin(), zh.data().end());
  }

  /// Context table of a stream, [n+1 x D]: row i is the context for
  /// transition i (window ending at i-1), row n the context after the last.
  Tensor context_table(const std::vector<Transition>& ts) const {
    const std::size_t n = ts.size();
    if (!uses_encoder() || n == 0) return Tensor::zeros({n + 1, D_});
    NoGradGuard ng;
    Tensor z = encode_means(ts, 0, n);
    Tensor seq = uses_ynet() ? ynet_.forward_sequence(z) : z;
    Vec rows(D_, 0.0);
    rows.insert(rows.end(), seq.data().begin(), seq.data().end());
    return Tensor({n + 1, D_}, std::move(rows));
  }

  /// One Adam step of the representation objective on a chunk batch:
  ///   kl_coef * KL + decoder_coef * decoder + alpha_Y * TD + AR
  /// (Y_phi terms only when the ablation keeps Y_phi).
  ReprLosses representation_step(const SequenceReplayBuffer& buffer, Rng& rng) {
    if (!uses_encoder()) return {};
    const std::size_t L = repr_cfg_.window, P = repr_cfg_.predict_steps, C = L + P, B = repr_cfg_.batch_chunks;
    const std::size_t F = encoder_.input_dim(), SA = obs_dim_ + act_dim_, J = P + 1;
    const auto chunks = buffer.sample_chunks(B, C, L - 1, rng);

    // Encoder inputs for every present row of every chunk.
    Vec feats, dec_sa, dec_y;
    std::vector<std::int64_t> base(B), first(B);
    std::int64_t total = 0;
    for (std::size_t k = 0; k < B; ++k) {
      const auto& ep = buffer.episode(chunks[k].episode).transitions;
      const std::int64_t c = chunks[k].start, lo = std::max<std::int64_t>(c, 0), hi = c + static_cast<std::int64_t>(C) - 1;
      base[k] = total - lo;
      first[k] = total;
      for (std::int64_t r = lo; r <= hi; ++r) {
        Vec f = normalized_features(ep[static_cast<std::size_t>(r)]);
        feats.insert(feats.end(), f.begin(), f.end());
        ++total;
      }
      // decoder rows: transitions e_j, j = 1..P
      for (std::size_t j = 1; j < J; ++j) {
        const std::int64_t e = c + static_cast<std::int64_t>(L) - 1 + static_cast<std::int64_t>(j);
        const std::size_t off = static_cast<std::size_t>(base[k] + e) * F;
        dec_sa.insert(dec_sa.end(), feats.begin() + static_cast<std::ptrdiff_t>(off),
                      feats.begin() + static_cast<std::ptrdiff_t>(off + SA));
        Vec y = decoder_target(ep[static_cast<std::size_t>(e)]);
        target_norm_.normalize_inplace(y.data());
        dec_y.insert(dec_y.end(), y.begin(), y.end());
      }
    }
    const auto T = static_cast<std::size_t>(total);
    Tensor noise({T, D_}, normal_vector(rng, T * D_));
    LatentSequence z = encoder_.encode(Tensor({T, F}, std::move(feats)), noise);
    Tensor zs = z.sample, zs_det = detach(z.sample);

    // Index bookkeeping: window n = k*J + j ends at episode row e_j = c + L - 1 + j.
    std::vector<std::int64_t> ends(B * J), starts(B * J), prev_idx, cur_rows, prev_rows, td_t, td_t1, td_rows;
    for (std::size_t k = 0; k < B; ++k)
      for (std::size_t j = 0; j < J; ++j) {
        const std::int64_t e = chunks[k].start + static_cast<std::int64_t>(L) - 1 + static_cast<std::int64_t>(j);
        const std::size_t n = k * J + j;
        ends[n] = base[k] + e;
        starts[n] = first[k];
        if (j >= 1) {
          prev_idx.push_back(static_cast<std::int64_t>(n - 1));
          cur_rows.push_back(base[k] + e);
          prev_rows.push_back(base[k] + e - 1);
        }
        if (j + 1 < J) {
          td_t.push_back(static_cast<std::int64_t>(n));
          td_t1.push_back(static_cast<std::int64_t>(n + 1));
          td_rows.push_back(base[k] + e);
        }
      }
    const std::size_t N = B * J, NP = B * P;

    ReprLosses out;
    Tensor kl = kl_loss(z);
    Tensor loss = scale(kl, repr_cfg_.kl_coef);
    out.kl = kl.item();

    Tensor ctx;
    if (uses_ynet()) {
      Tensor win = sliding_windows(zs, ends, starts, L);
      Tensor zhat = ynet_.forward_windows(win, N).zhat;
      ctx = gather_rows(zhat, prev_idx);
      Tensor zhat_ar = zhat;
      Tensor win_w = win;
      if (!repr_cfg_.encoder_grad_from_repr) {
        win_w = sliding_windows(zs_det, ends, starts, L);
        zhat_ar = ynet_.forward_windows(win_w, N).zhat;
      }
      Tensor ar = ar_loss(gather_rows(zhat_ar, prev_idx), gather_rows(zs_det, cur_rows));
      loss = loss + ar;
      out.ar = ar.item();
      if (uses_td()) {
        Tensor w_all = W_.forward_windows(win_w, N);
        Tensor wt_all;
        {
          NoGradGuard ng;
          wt_all = W_target_.forward_windows(win_w, N);
        }
        Tensor td = wavelet_td_loss(gather_rows(w_all, td_t), gather_rows(zs_det, td_rows), gather_rows(wt_all, td_t1),
                                    repr_cfg_.td_gamma);
        loss = loss + scale(td, repr_cfg_.alpha_y);
        out.td = td.item();
      }
    } else {
      ctx = gather_rows(zs, prev_rows);
    }
    if (repr_cfg_.decoder_coef > 0.0) {
      Tensor dec_in = concat_cols({Tensor({NP, SA}, std::move(dec_sa)), ctx});
      Tensor dec = decoder_.loss(dec_in, Tensor({NP, obs_dim_ + 1}, std::move(dec_y)));
      loss = loss + scale(dec, repr_cfg_.decoder_coef);
      out.decoder = dec.item();
    }
    out.total = loss.item();

    repr_opt_.zero_grad();
    loss.backward();
    repr_opt_.step();
    if (uses_td()) {
      ParamList dst = W_target_.params_with_filter();
      soft_update(W_.params_with_filter(), dst, repr_cfg_.soft_update);
    }
    return out;
  }

  /// Checkpoint contents (parameters, optimizer moments, normalizers).
  void save_state(Checkpoint& ck, nlohmann::json& meta) const {
    ck.add_params("encoder.", encoder_.params());
    ck.add_params("decoder.", decoder_.params());
    ck.add_params("ynet.", ynet_.state());
    ck.add_params("w.head.", W_.head_params());
    ck.add_params("w_target.", W_target_.params_with_filter());
    ck.add_params("sac.", sac_.state());
    detail::save_adam(ck, meta, "opt.repr.", repr_opt_);
    detail::save_adam(ck, meta, "opt.actor.", sac_.actor_optimizer());
    detail::save_adam(ck, meta, "opt.critic.", sac_.critic_optimizer());
    detail::save_adam(ck, meta, "opt.alpha.", sac_.alpha_optimizer());
    detail::save_norm(ck, meta, "norm.features.", feat_norm_);
    detail::save_norm(ck, meta, "norm.targets.", target_norm_);
  }

  void load_state(const Checkpoint& ck, const nlohmann::json& meta) {
    ck.load_params("encoder.", encoder_.params());
    ck.load_params("decoder.", decoder_.params());
    ck.load_params("ynet.", ynet_.state());
    ck.load_params("w.head.", W_.head_params());
    ck.load_params("w_target.", W_target_.params_with_filter());
    ck.load_params("sac.", sac_.state());
    detail::load_adam(ck, meta, "opt.repr.", repr_opt_);
    detail::load_adam(ck, meta, "opt.actor.", sac_.actor_optimizer());
    detail::load_adam(ck, meta, "opt.critic.", sac_.critic_optimizer());
    detail::load_adam(ck, meta, "opt.alpha.", sac_.alpha_optimizer());
    detail::load_norm(ck, meta, "norm.features.", feat_norm_);
    detail::load_norm(ck, meta, "norm.targets.", target_norm_);
  }

 private:
  ReprConfig repr_cfg_;
  Ablation ablation_;
  std::size_t obs_dim_, act_dim_, D_;
  RunningNorm feat_norm_, target_norm_;
  ContextEncoder encoder_;
  WaveletReprNet ynet_;
  WNetwork W_, W_target_;
  TransitionDecoder decoder_;
  ContextualSAC sac_;
  Adam repr_opt_;
};

/// Per-episode context while acting: encodes each new transition and keeps
/// the last L latents.
class OnlineContext {
 public:
  explicit OnlineContext(const WisdomAgent& agent) : agent_(&agent), ctx_(agent.ctx_dim(), 0.0) {}

  const Vec& current() const { return ctx_; }

  void observe(const Transition& t) {
    if (!agent_->uses_encoder()) return;
    Tensor z = agent_->encode_means({t}, 0, 1);
    recent_.emplace_back(z.data().begin(), z.data().end());
    if (recent_.size() > agent_->window()) recent_.pop_front();
    ctx_ = agent_->context_from_latents(recent_);
  }

 private:
  const WisdomAgent* agent_;
  std::deque<Vec> recent_;
  Vec ctx_;
};

}  // namespace wisdom
