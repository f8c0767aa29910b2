#pragma once

// Training loop: warm start, then per epoch {collect, representation phase,
// policy phase, evaluate}; versioned metrics CSV, checkpoints with full
// resume state, and a final summary.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wisdom/agent.hpp"

namespace wisdom {

// ---------------------------------------------------------------- metrics

inline constexpr int kMetricsSchemaVersion = 1;

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t env_steps = 0;
  double mean_eval_return = 0, std_eval_return = 0, mean_eval_step_reward = 0;
  double encoder_kl = 0, decoder_loss = 0, wavelet_td = 0, ar_loss = 0;
  double critic_loss = 0, actor_loss = 0, alpha = 0;
  double nonstationarity_degree = 0;
};

inline std::string metrics_schema_line() { return "# wisdom-metrics schema_version=" + std::to_string(kMetricsSchemaVersion); }

inline std::string metrics_header() {
  return "epoch,env_steps,mean_eval_return,std_eval_return,mean_eval_step_reward,encoder_kl,decoder_loss,wavelet_td,"
         "ar_loss,critic_loss,actor_loss,alpha,nonstationarity_degree";
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

inline std::string metrics_row(const MetricsRecord& m) {
  std::string s = std::to_string(m.epoch) + "," + std::to_string(m.env_steps);
  for (double x : {m.mean_eval_return, m.std_eval_return, m.mean_eval_step_reward, m.encoder_kl, m.decoder_loss,
                   m.wavelet_td, m.ar_loss, m.critic_loss, m.actor_loss, m.alpha, m.nonstationarity_degree})
    s += "," + format_double(x);
  return s;
}

// ---------------------------------------------------------------- rollouts

enum class ActMode { Random, Stochastic, Deterministic };

struct EpisodeLog {
  std::vector<Transition> transitions;
  std::vector<Vec> contexts;  ///< context used for each action
  double total_reward = 0;
};

/// Maps (observation, context) to an action.
using ActionFn = std::function<Vec(const Vec& s, const Vec& ctx)>;

inline ActionFn agent_policy(const WisdomAgent& agent, ActMode mode, Rng& rng) {
  if (mode == ActMode::Random)
    return [&agent, &rng](const Vec&, const Vec&) {
      Vec a(agent.act_dim());
      for (auto& x : a) x = uniform(rng, -1.0, 1.0);
      return a;
    };
  const bool det = mode == ActMode::Deterministic;
  return [&agent, &rng, det](const Vec& s, const Vec& ctx) { return agent.sac().act(s, ctx, det, rng); };
}

/// Uniform random actions that are held, switching with probability
/// `switch_prob` per step (persistent excitation for system identification).
inline ActionFn sticky_random_policy(std::size_t act_dim, double switch_prob, Rng& rng) {
  auto held = std::make_shared<Vec>();
  return [held, act_dim, switch_prob, &rng](const Vec&, const Vec&) {
    if (held->empty() || uniform(rng, 0.0, 1.0) < switch_prob) {
      held->resize(act_dim);
      for (auto& x : *held) x = uniform(rng, -1.0, 1.0);
    }
    return *held;
  };
}

/// Runs one episode from env.reset(seed) (or the given schedule) until
/// termination or the time limit, maintaining the agent's online context.
inline EpisodeLog rollout(Environment& env, const WisdomAgent& agent, std::uint64_t seed, const ActionFn& policy,
                          const TaskSchedule* schedule = nullptr) {
  EpisodeLog log;
  Vec s = schedule ? env.reset_with_schedule(seed, *schedule) : env.reset(seed);
  OnlineContext ctx(agent);
  for (;;) {
    Vec a = policy(s, ctx.current());
    log.contexts.push_back(ctx.current());
    Transition t = env.step(a);
    ctx.observe(t);
    log.total_reward += t.r;
    s = t.s_next;
    const bool over = t.done || t.truncated;
    log.transitions.push_back(std::move(t));
    if (over) break;
  }
  return log;
}

struct EvalResult {
  double mean_return = 0, std_return = 0, mean_step_reward = 0, nonstationarity_degree = 0;
  std::vector<double> returns;
};

struct EvalLogEntry {
  std::uint64_t seed = 0;
  std::size_t trajectory = 0;
  EpisodeLog episode;
};

/// Deterministic-mode rollouts on fresh schedules derived from the held-out
/// `seeds`; never touches the replay buffer or any training RNG.
inline EvalResult evaluate(const EnvConfig& env_cfg, const WisdomAgent& agent, const std::vector<std::uint64_t>& seeds,
                           std::size_t n_trajectories, std::vector<EvalLogEntry>* log = nullptr) {
  if (seeds.empty() || n_trajectories == 0) throw ParameterError("evaluate: need >= 1 seed and >= 1 trajectory");
  auto env = make_env(env_cfg);
  if (env->obs_dim() != agent.obs_dim() || env->action_dim() != agent.act_dim())
    throw DimensionError("evaluate: environment '" + env_cfg.name + "' does not match the agent's dimensions");
  EvalResult r;
  double steps = 0, reward = 0, degree = 0;
  Rng unused(0);
  const ActionFn policy = agent_policy(agent, ActMode::Deterministic, unused);
  for (auto seed : seeds)
    for (std::size_t j = 0; j < n_trajectories; ++j) {
      EpisodeLog ep = rollout(*env, agent, derive_seed(seed, "eval.episode", j), policy);
      r.returns.push_back(ep.total_reward);
      reward += ep.total_reward;
      steps += static_cast<double>(ep.transitions.size());
      degree += nonstationarity_degree(env->schedule());
      if (log) log->push_back({seed, j, std::move(ep)});
    }
  const double n = static_cast<double>(r.returns.size());
  for (double x : r.returns) r.mean_return += x / n;
  for (double x : r.returns) r.std_return += (x - r.mean_return) * (x - r.mean_return) / n;
  r.std_return = std::sqrt(r.std_return);
  r.mean_step_reward = reward / steps;
  r.nonstationarity_degree = degree / n;
  return r;
}

/// CSV: seed, trajectory, step, s..., a..., r, omega..., segment, context...
inline void write_transitions_csv(const std::filesystem::path& path, const std::vector<EvalLogEntry>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ContractError("cannot write " + path.string());
  if (log.empty() || log[0].episode.transitions.empty()) return;
  const auto& t0 = log[0].episode.transitions[0];
  out << "seed,trajectory,step";
  for (std::size_t i = 0; i < t0.s.size(); ++i) out << ",s" << i;
  for (std::size_t i = 0; i < t0.a.size(); ++i) out << ",a" << i;
  out << ",r";
  for (std::size_t i = 0; i < t0.omega.size(); ++i) out << ",omega_hidden" << i;
  out << ",segment";
  for (std::size_t i = 0; i < log[0].episode.contexts[0].size(); ++i) out << ",zhat" << i;
  out << "\n";
  for (const auto& e : log)
    for (std::size_t k = 0; k < e.episode.transitions.size(); ++k) {
      const auto& t = e.episode.transitions[k];
      out << e.seed << "," << e.trajectory << "," << t.step;
      for (double x : t.s) out << "," << format_double(x);
      for (double x : t.a) out << "," << format_double(x);
      out << "," << format_double(t.r);
      for (double x : t.omega) out << "," << format_double(x);
      out << "," << t.segment;
      for (double x : e.episode.contexts[k]) out << "," << format_double(x);
      out << "\n";
    }
}

// ---------------------------------------------------------------- trainer

class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg)
      : cfg_(std::move(cfg)),
        env_(make_env(cfg_.env)),
        agent_(std::make_unique<WisdomAgent>(cfg_, env_->obs_dim(), env_->action_dim())),
        buffer_(cfg_.train.buffer_capacity),
        rng_collect_(make_rng(cfg_.seed, "collect")),
        rng_repr_(make_rng(cfg_.seed, "sampling.repr")),
        rng_policy_(make_rng(cfg_.seed, "sampling.policy")) {
    validate(cfg_);
  }

  const ExperimentConfig& config() const { return cfg_; }
  const WisdomAgent& agent() const { return *agent_; }
  WisdomAgent& agent() { return *agent_; }
  const SequenceReplayBuffer& buffer() const { return buffer_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t env_steps() const { return env_steps_; }
  const std::string& phase() const { return phase_; }

  /// Collects whole episodes until at least n_steps transitions were added.
  std::size_t collect(std::size_t n_steps, ActMode mode) {
    return collect(n_steps, agent_policy(*agent_, mode, rng_collect_));
  }

  /// As above with a caller-supplied behaviour policy.
  std::size_t collect(std::size_t n_steps, const ActionFn& policy) {
    phase_ = "collect";
    std::size_t added = 0;
    std::vector<Transition> fresh;
    while (added < n_steps) {
      EpisodeLog ep = rollout(*env_, *agent_, derive_seed(cfg_.seed, "train.episode", episodes_started_++), policy);
      added += ep.transitions.size();
      fresh.insert(fresh.end(), ep.transitions.begin(), ep.transitions.end());
      buffer_.add_episode(std::move(ep.transitions));
    }
    env_steps_ += added;
    agent_->update_normalizers(fresh);
    return added;
  }

  /// Uniform-random actions for the configured number of initial transitions.
  std::size_t warm_start() { return collect(cfg_.train.initial_transitions, ActMode::Random); }

  ReprLosses train_representation_phase(std::size_t steps) {
    phase_ = "representation";
    ReprLosses mean;
    if (!agent_->uses_encoder() || steps == 0) return mean;
    const std::size_t C = cfg_.repr.window + cfg_.repr.predict_steps;
    if (buffer_.valid_chunk_starts(C, cfg_.repr.window - 1) == 0) {
      std::cerr << "warning: representation phase skipped (no episode long enough in the buffer)\n";
      return mean;
    }
    for (std::size_t i = 0; i < steps; ++i) {
      const ReprLosses l = agent_->representation_step(buffer_, rng_repr_);
      mean.kl += l.kl / static_cast<double>(steps);
      mean.decoder += l.decoder / static_cast<double>(steps);
      mean.td += l.td / static_cast<double>(steps);
      mean.ar += l.ar / static_cast<double>(steps);
      mean.total += l.total / static_cast<double>(steps);
    }
    return mean;
  }

  SacStats train_policy_phase(std::size_t steps) {
    phase_ = "policy";
    SacStats mean;
    if (steps == 0) return mean;
    if (buffer_.empty()) {
      std::cerr << "warning: policy phase skipped (empty buffer)\n";
      return mean;
    }
    refresh_context_cache(epoch_ % cfg_.train.zhat_refresh_interval == 0);
    for (std::size_t i = 0; i < steps; ++i) {
      const SacStats st = agent_->sac().update(policy_batch(cfg_.sac.batch_size), rng_policy_);
      mean.critic_loss += st.critic_loss / static_cast<double>(steps);
      mean.actor_loss += st.actor_loss / static_cast<double>(steps);
      mean.alpha_loss += st.alpha_loss / static_cast<double>(steps);
      mean.entropy += st.entropy / static_cast<double>(steps);
      mean.alpha = st.alpha;
    }
    return mean;
  }

  /// Batch of uniformly sampled transitions with cached contexts.
  SacBatch policy_batch(std::size_t B) {
    const auto refs = buffer_.sample_transitions(B, rng_policy_);
    const std::size_t S = agent_->obs_dim(), A = agent_->act_dim(), D = agent_->ctx_dim();
    Vec s, a, r, sn, done, ctx, ctxn;
    for (const auto& ref : refs) {
      const Episode& ep = buffer_.episode(ref.episode);
      const Transition& t = ep.transitions[ref.index];
      s.insert(s.end(), t.s.begin(), t.s.end());
      a.insert(a.end(), t.a.begin(), t.a.end());
      sn.insert(sn.end(), t.s_next.begin(), t.s_next.end());
      r.push_back(t.r);
      done.push_back(t.done ? 1.0 : 0.0);
      const Tensor& table = cache_.at(ep.id);
      auto row = table.data().subspan(ref.index * D, 2 * D);
      ctx.insert(ctx.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(D));
      ctxn.insert(ctxn.end(), row.begin() + static_cast<std::ptrdiff_t>(D), row.end());
    }
    SacBatch b;
    b.s = Tensor({B, S}, std::move(s));
    b.a = Tensor({B, A}, std::move(a));
    b.r = Tensor({B, 1}, std::move(r));
    b.s_next = Tensor({B, S}, std::move(sn));
    b.done = Tensor({B, 1}, std::move(done));
    b.ctx = Tensor({B, D}, std::move(ctx));
    b.ctx_next = Tensor({B, D}, std::move(ctxn));
    return b;
  }

  /// Recomputes the per-episode context tables with the current (frozen)
  /// representation nets: all of them when `full`, otherwise new episodes only.
  void refresh_context_cache(bool full) {
    std::map<std::uint64_t, Tensor> next;
    for (const auto& ep : buffer_.episodes()) {
      auto it = cache_.find(ep.id);
      next[ep.id] = (!full && it != cache_.end()) ? it->second : agent_->context_table(ep.transitions);
    }
    cache_ = std::move(next);
  }

  EvalResult evaluate_now(std::size_t n_trajectories, std::vector<EvalLogEntry>* log = nullptr) const {
    return evaluate(cfg_.env, *agent_, cfg_.train.eval_seeds, n_trajectories, log);
  }

  /// One epoch; returns a metrics row when this epoch is an evaluation epoch.
  std::optional<MetricsRecord> run_epoch() {
    collect(cfg_.train.transitions_per_epoch, ActMode::Stochastic);
    const ReprLosses rl = train_representation_phase(cfg_.repr.steps_per_epoch);
    const SacStats ps = train_policy_phase(cfg_.sac.steps_per_epoch);
    ++epoch_;
    if (epoch_ % cfg_.train.eval_interval != 0 && epoch_ != cfg_.train.epochs) return std::nullopt;
    phase_ = "evaluate";
    const EvalResult ev = evaluate_now(cfg_.train.eval_trajectories);
    MetricsRecord m;
    m.epoch = epoch_;
    m.env_steps = env_steps_;
    m.mean_eval_return = ev.mean_return;
    m.std_eval_return = ev.std_return;
    m.mean_eval_step_reward = ev.mean_step_reward;
    m.encoder_kl = rl.kl;
    m.decoder_loss = rl.decoder;
    m.wavelet_td = rl.td;
    m.ar_loss = rl.ar;
    m.critic_loss = ps.critic_loss;
    m.actor_loss = ps.actor_loss;
    m.alpha = agent_->sac().alpha();
    m.nonstationarity_degree = ev.nonstationarity_degree;
    return m;
  }

  // ---------------------------------------------------------- checkpoints

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    nlohmann::json meta;
    meta["config"] = config_to_json(cfg_);
    meta["epoch"] = epoch_;
    meta["env_steps"] = env_steps_;
    meta["episodes_started"] = episodes_started_;
    meta["rng.collect"] = rng_string(rng_collect_);
    meta["rng.repr"] = rng_string(rng_repr_);
    meta["rng.policy"] = rng_string(rng_policy_);
    agent_->save_state(ck, meta);
    const std::size_t row = transition_row_width();
    nlohmann::json ids = nlohmann::json::array();
    std::size_t k = 0;
    for (const auto& ep : buffer_.episodes()) {
      ids.push_back(ep.id);
      Vec flat;
      flat.reserve(ep.size() * row);
      for (const auto& t : ep.transitions) pack_transition(t, flat);
      ck.add("buffer." + std::to_string(k), {ep.size(), row}, std::move(flat));
      auto it = cache_.find(ep.id);
      if (it != cache_.end()) ck.add("cache." + std::to_string(k), it->second.shape(), Vec(it->second.data().begin(), it->second.data().end()));
      ++k;
    }
    meta["buffer.ids"] = ids;
    meta["buffer.next_id"] = buffer_.next_id();
    ck.meta = meta;
    return ck;
  }

  void save(const std::filesystem::path& dir) const { save_checkpoint(dir, to_checkpoint()); }

  /// Rebuilds a trainer from a checkpoint. `cfg` may differ from the stored
  /// config only in run-length fields (epochs, output_dir, checkpoint_interval).
  static std::unique_ptr<Trainer> restore(const Checkpoint& ck, std::optional<ExperimentConfig> cfg = std::nullopt) {
    ExperimentConfig stored = config_from_json(ck.meta.at("config"));
    if (cfg) {
      ExperimentConfig a = stored, b = *cfg;
      b.train.epochs = a.train.epochs;
      b.output_dir = a.output_dir;
      b.train.checkpoint_interval = a.train.checkpoint_interval;
      if (config_to_json(a) != config_to_json(b))
        throw ParameterError("resume: config differs from the checkpoint's beyond run-length fields");
    }
    auto tr = std::make_unique<Trainer>(cfg ? *cfg : stored);
    const auto& m = ck.meta;
    tr->epoch_ = m.at("epoch").get<std::size_t>();
    tr->env_steps_ = m.at("env_steps").get<std::size_t>();
    tr->episodes_started_ = m.at("episodes_started").get<std::uint64_t>();
    parse_rng(m.at("rng.collect").get<std::string>(), tr->rng_collect_);
    parse_rng(m.at("rng.repr").get<std::string>(), tr->rng_repr_);
    parse_rng(m.at("rng.policy").get<std::string>(), tr->rng_policy_);
    tr->agent_->load_state(ck, m);
    std::deque<Episode> eps;
    const auto ids = m.at("buffer.ids").get<std::vector<std::uint64_t>>();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto& arr = ck.at("buffer." + std::to_string(k));
      Episode ep;
      ep.id = ids[k];
      for (std::size_t i = 0; i < arr.shape[0]; ++i) ep.transitions.push_back(tr->unpack_transition(arr.data, i));
      if (ck.has("cache." + std::to_string(k))) {
        const auto& c = ck.at("cache." + std::to_string(k));
        tr->cache_[ep.id] = Tensor(c.shape, c.data);
      }
      eps.push_back(std::move(ep));
    }
    tr->buffer_.restore(std::move(eps), m.at("buffer.next_id").get<std::uint64_t>());
    return tr;
  }

 private:
  static std::string rng_string(const Rng& r) {
    std::ostringstream os;
    os << r;
    return os.str();
  }
  static void parse_rng(const std::string& s, Rng& r) {
    std::istringstream is(s);
    is >> r;
    if (!is) throw ContractError("checkpoint: corrupt RNG state");
  }

  std::size_t transition_row_width() const {
    return 2 * env_->obs_dim() + env_->action_dim() + env_->omega_dim() + 5;
  }
  static void pack_transition(const Transition& t, Vec& out) {
    out.insert(out.end(), t.s.begin(), t.s.end());
    out.insert(out.end(), t.a.begin(), t.a.end());
    out.insert(out.end(), t.s_next.begin(), t.s_next.end());
    out.push_back(t.r);
    out.push_back(t.done ? 1.0 : 0.0);
    out.push_back(t.truncated ? 1.0 : 0.0);
    out.insert(out.end(), t.omega.begin(), t.omega.end());
    out.push_back(static_cast<double>(t.step));
    out.push_back(static_cast<double>(t.segment));
  }
  Transition unpack_transition(const Vec& flat, std::size_t i) const {
    const std::size_t S = env_->obs_dim(), A = env_->action_dim(), O = env_->omega_dim();
    auto p = flat.begin() + static_cast<std::ptrdiff_t>(i * transition_row_width());
    Transition t;
    t.s.assign(p, p + static_cast<std::ptrdiff_t>(S));
    p += static_cast<std::ptrdiff_t>(S);
    t.a.assign(p, p + static_cast<std::ptrdiff_t>(A));
    p += static_cast<std::ptrdiff_t>(A);
    t.s_next.assign(p, p + static_cast<std::ptrdiff_t>(S));
    p += static_cast<std::ptrdiff_t>(S);
    t.r = *p++;
    t.done = *p++ != 0.0;
    t.truncated = *p++ != 0.0;
    t.omega.assign(p, p + static_cast<std::ptrdiff_t>(O));
    p += static_cast<std::ptrdiff_t>(O);
    t.step = static_cast<std::size_t>(*p++);
    t.segment = static_cast<std::size_t>(*p++);
    return t;
  }

  ExperimentConfig cfg_;
  std::unique_ptr<Environment> env_;
  std::unique_ptr<WisdomAgent> agent_;
  SequenceReplayBuffer buffer_;
  Rng rng_collect_, rng_repr_, rng_policy_;
  std::size_t epoch_ = 0, env_steps_ = 0;
  std::uint64_t episodes_started_ = 0;
  std::map<std::uint64_t, Tensor> cache_;
  std::string phase_ = "init";
};

// ---------------------------------------------------------------- run_experiment

struct RunOptions {
  std::optional<std::filesystem::path> resume_from;
  bool verbose = false;
};

struct RunSummary {
  std::string name;
  std::string ablation;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, env_steps = 0;
  EvalResult final_eval;
  double wall_seconds = 0;
  std::vector<MetricsRecord> rows;  ///< rows written by this invocation
};

inline nlohmann::json summary_json(const RunSummary& s) {
  return {{"metrics_schema_version", kMetricsSchemaVersion},
          {"name", s.name},
          {"ablation", s.ablation},
          {"seed", s.seed},
          {"epochs", s.epochs},
          {"env_steps", s.env_steps},
          {"final_eval_mean_return", s.final_eval.mean_return},
          {"final_eval_std_return", s.final_eval.std_return},
          {"final_eval_mean_step_reward", s.final_eval.mean_step_reward},
          {"final_eval_returns", s.final_eval.returns},
          {"final_eval_nonstationarity_degree", s.final_eval.nonstationarity_degree},
          {"wall_seconds", s.wall_seconds}};
}

/// Warm start -> epochs of {collect, representation, policy, evaluate}.
/// Writes config.json, metrics.csv, checkpoint/, summary.json (and
/// transitions.csv when enabled) under cfg.output_dir.
inline RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);
  {
    std::ofstream c(out / "config.json", std::ios::trunc);
    c << config_to_json(cfg).dump(2) << "\n";
  }
  std::unique_ptr<Trainer> tr;
  std::ofstream metrics;
  if (opt.resume_from) {
    tr = Trainer::restore(load_checkpoint(*opt.resume_from), cfg);
    metrics.open(out / "metrics.csv", std::ios::app);
    if (std::filesystem::file_size(out / "metrics.csv") == 0)
      metrics << metrics_schema_line() << "\n" << metrics_header() << "\n";
  } else {
    tr = std::make_unique<Trainer>(cfg);
    metrics.open(out / "metrics.csv", std::ios::trunc);
    metrics << metrics_schema_line() << "\n" << metrics_header() << "\n";
    tr->warm_start();
  }
  if (!metrics) throw ContractError("cannot write " + (out / "metrics.csv").string());

  RunSummary sum;
  sum.name = cfg.name;
  sum.ablation = ablation_name(cfg.ablation);
  sum.seed = cfg.seed;
  while (tr->epoch() < cfg.train.epochs) {
    std::optional<MetricsRecord> row;
    try {
      row = tr->run_epoch();
    } catch (const std::exception& e) {
      const std::string where = "epoch " + std::to_string(tr->epoch() + 1) + " (" + tr->phase() + " phase)";
      try {
        tr->save(out / "checkpoint");
      } catch (const std::exception& e2) {
        throw TrainingError(where + ": " + e.what() + " [checkpoint flush failed: " + e2.what() + "]");
      }
      throw TrainingError(where + ": " + e.what());
    }
    if (row) {
      metrics << metrics_row(*row) << "\n" << std::flush;
      sum.rows.push_back(*row);
      if (opt.verbose)
        std::cerr << "epoch " << row->epoch << " steps " << row->env_steps << " return " << row->mean_eval_return
                  << " critic " << row->critic_loss << " alpha " << row->alpha << " dec " << row->decoder_loss << "\n";
    }
    if (cfg.train.checkpoint_interval > 0 && tr->epoch() % cfg.train.checkpoint_interval == 0)
      tr->save(out / ("checkpoint_epoch" + std::to_string(tr->epoch())));
  }
  tr->save(out / "checkpoint");

  std::vector<EvalLogEntry> log;
  sum.final_eval = tr->evaluate_now(cfg.train.final_eval_trajectories, cfg.train.save_transitions ? &log : nullptr);
  if (cfg.train.save_transitions) write_transitions_csv(out / "transitions.csv", log);
  sum.epochs = tr->epoch();
  sum.env_steps = tr->env_steps();
  sum.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream s(out / "summary.json", std::ios::trunc);
  s << summary_json(sum).dump(2) << "\n";
  return sum;
}

/// Reads metrics.csv, checking the schema version line.
inline std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != metrics_schema_line()) throw ContractError("metrics schema mismatch: '" + line + "'");
  std::getline(in, line);
  if (line != metrics_header()) throw ContractError("metrics header mismatch");
  std::vector<MetricsRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 13) throw ContractError("metrics row has " + std::to_string(v.size()) + " columns");
    MetricsRecord m;
    m.epoch = static_cast<std::size_t>(v[0]);
    m.env_steps = static_cast<std::size_t>(v[1]);
    m.mean_eval_return = v[2];
    m.std_eval_return = v[3];
    m.mean_eval_step_reward = v[4];
    m.encoder_kl = v[5];
    m.decoder_loss = v[6];
    m.wavelet_td = v[7];
    m.ar_loss = v[8];
    m.critic_loss = v[9];
    m.actor_loss = v[10];
    m.alpha = v[11];
    m.nonstationarity_degree = v[12];
    rows.push_back(m);
  }
  return rows;
}

}  // namespace wisdom
