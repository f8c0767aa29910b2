#pragma once

// Experiment configuration: JSON is the one canonical format. Every section
// and field is optional (defaults below are the desk-scale values); unknown
// keys are rejected so that typos do not silently fall back to defaults.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wisdom/envs.hpp"
#include "wisdom/errors.hpp"

namespace wisdom {

using Json = nlohmann::json;

enum class Ablation { Full, AlphaY0, NoYNet, PlainSac };

inline std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::AlphaY0: return "alpha_y0";
    case Ablation::NoYNet: return "no_ynet";
    case Ablation::PlainSac: return "plain_sac";
  }
  return "full";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::Full;
  if (s == "alpha_y0") return Ablation::AlphaY0;
  if (s == "no_ynet") return Ablation::NoYNet;
  if (s == "plain_sac") return Ablation::PlainSac;
  throw ParameterError("unknown ablation '" + s + "' (expected full, alpha_y0, no_ynet or plain_sac)");
}

inline std::vector<Ablation> all_ablations() {
  return {Ablation::Full, Ablation::AlphaY0, Ablation::NoYNet, Ablation::PlainSac};
}

struct ReprConfig {
  std::size_t latent_dim = 5;  ///< D
  std::size_t window = 32;     ///< L
  std::size_t levels = 2;      ///< M
  double keep_fraction = 0.5;  ///< rho
  std::size_t filter_length = 2;
  bool trainable_filters = true;
  double alpha_y = 0.9;   ///< weight of the wavelet TD loss
  double td_gamma = 0.9;  ///< discount inside the wavelet TD operator
  double kl_coef = 0.01;
  double decoder_coef = 1.0;
  /// When false, z is detached before Y_phi/W, so only KL and the decoder train the encoder.
  bool encoder_grad_from_repr = true;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64};
  std::vector<std::size_t> w_hidden{64};
  double lr = 3e-4;
  double soft_update = 5e-3;      ///< sigma for W_target
  std::size_t batch_chunks = 16;  ///< sequences per representation batch
  std::size_t predict_steps = 16; ///< window positions trained per sequence (P)
  std::size_t steps_per_epoch = 20;
};

struct SacConfig {
  std::vector<std::size_t> hidden{64, 64};
  double lr = 3e-4;
  double gamma = 0.99;
  double tau = 5e-3;
  double target_entropy_factor = 1.0;
  double init_log_alpha = 0.0;
  std::size_t batch_size = 128;
  std::size_t steps_per_epoch = 200;
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t initial_transitions = 200;
  std::size_t transitions_per_epoch = 200;
  std::size_t buffer_capacity = 100000;
  std::size_t eval_interval = 1;
  std::size_t eval_trajectories = 2;
  std::vector<std::uint64_t> eval_seeds{1000001};
  std::size_t final_eval_trajectories = 10;
  std::size_t checkpoint_interval = 0;  ///< 0: only the final checkpoint
  bool save_transitions = false;
  std::size_t zhat_refresh_interval = 1;  ///< epochs between full zhat cache refreshes
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "runs/experiment";
  Ablation ablation = Ablation::Full;
  EnvConfig env;
  ReprConfig repr;
  SacConfig sac;
  TrainConfig train;
};

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ParameterError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ParameterError("config: unknown key '" + where + "." + it.key() + "'");
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ParameterError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Throws ParameterError naming the first violated constraint.
inline void validate(const ExperimentConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ParameterError("config: " + what);
  };
  const auto& r = c.repr;
  need(r.latent_dim >= 1, "repr.latent_dim must be >= 1");
  need(r.levels >= 1 && r.levels < 31, "repr.levels must lie in [1, 30]");
  need(r.window >= (std::size_t{1} << r.levels), "repr.window (L) must be >= 2^levels");
  need(r.keep_fraction > 0.0 && r.keep_fraction <= 1.0, "repr.keep_fraction must lie in (0, 1]");
  need(r.filter_length >= 2 && r.filter_length % 2 == 0, "repr.filter_length must be even and >= 2");
  need(r.alpha_y >= 0.0, "repr.alpha_y must be >= 0");
  need(r.td_gamma >= 0.0 && r.td_gamma < 1.0, "repr.td_gamma must lie in [0, 1)");
  need(r.kl_coef >= 0.0 && r.decoder_coef >= 0.0, "repr loss coefficients must be >= 0");
  need(r.lr > 0.0, "repr.lr must be > 0");
  need(r.soft_update > 0.0 && r.soft_update <= 1.0, "repr.soft_update must lie in (0, 1]");
  need(r.batch_chunks >= 1 && r.predict_steps >= 1, "repr batch sizes must be >= 1");
  const auto& s = c.sac;
  need(s.lr > 0.0, "sac.lr must be > 0");
  need(s.gamma >= 0.0 && s.gamma <= 1.0, "sac.gamma must lie in [0, 1]");
  need(s.tau > 0.0 && s.tau <= 1.0, "sac.tau must lie in (0, 1]");
  need(s.target_entropy_factor >= 0.0, "sac.target_entropy_factor must be >= 0");
  need(s.batch_size >= 1, "sac.batch_size must be >= 1");
  const auto& t = c.train;
  need(t.buffer_capacity >= c.env.max_steps, "train.buffer_capacity must hold at least one episode");
  need(t.eval_interval >= 1, "train.eval_interval must be >= 1");
  need(t.eval_trajectories >= 1 && !t.eval_seeds.empty(), "evaluation needs >= 1 trajectory and >= 1 seed");
  need(t.zhat_refresh_interval >= 1, "train.zhat_refresh_interval must be >= 1");
  need(c.env.max_steps >= 1, "env.max_steps must be >= 1");
  need(c.env.max_steps > r.predict_steps, "env.max_steps must exceed repr.predict_steps");
  need(c.env.schedule.mean_period > 0.0, "env.mean_period must be > 0");
  need(c.env.schedule.period_std >= 0.0, "env.period_std must be >= 0");
  need(c.env.obs_noise >= 0.0, "env.obs_noise must be >= 0");
  need(!c.output_dir.empty(), "output_dir must be set");
  // Constructing the environment checks its name and fixed_omega dimension.
  make_env(c.env);
}

inline ExperimentConfig config_from_json(const Json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::reject_unknown(j, {"name", "seed", "output_dir", "ablation", "env", "repr", "sac", "train"}, "config");
  read(j, "name", c.name);
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);
  if (j.contains("ablation")) c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  if (j.contains("env")) {
    const auto& e = j.at("env");
    detail::reject_unknown(e,
                           {"name", "max_steps", "mean_period", "period_std", "min_period", "obs_noise", "fixed_omega",
                            "meals_varied", "adult"},
                           "env");
    read(e, "name", c.env.name);
    read(e, "max_steps", c.env.max_steps);
    read(e, "mean_period", c.env.schedule.mean_period);
    read(e, "period_std", c.env.schedule.period_std);
    read(e, "min_period", c.env.schedule.min_period);
    read(e, "obs_noise", c.env.obs_noise);
    read(e, "fixed_omega", c.env.fixed_omega);
    read(e, "meals_varied", c.env.glucose.meals_varied);
    read(e, "adult", c.env.glucose.adult);
  }
  if (j.contains("repr")) {
    const auto& r = j.at("repr");
    detail::reject_unknown(r,
                           {"latent_dim", "window", "levels", "keep_fraction", "filter_length", "trainable_filters",
                            "alpha_y", "td_gamma", "kl_coef", "decoder_coef", "encoder_grad_from_repr",
                            "encoder_hidden", "decoder_hidden", "w_hidden", "lr", "soft_update", "batch_chunks",
                            "predict_steps", "steps_per_epoch"},
                           "repr");
    auto& o = c.repr;
    read(r, "latent_dim", o.latent_dim);
    read(r, "window", o.window);
    read(r, "levels", o.levels);
    read(r, "keep_fraction", o.keep_fraction);
    read(r, "filter_length", o.filter_length);
    read(r, "trainable_filters", o.trainable_filters);
    read(r, "alpha_y", o.alpha_y);
    read(r, "td_gamma", o.td_gamma);
    read(r, "kl_coef", o.kl_coef);
    read(r, "decoder_coef", o.decoder_coef);
    read(r, "encoder_grad_from_repr", o.encoder_grad_from_repr);
    read(r, "encoder_hidden", o.encoder_hidden);
    read(r, "decoder_hidden", o.decoder_hidden);
    read(r, "w_hidden", o.w_hidden);
    read(r, "lr", o.lr);
    read(r, "soft_update", o.soft_update);
    read(r, "batch_chunks", o.batch_chunks);
    read(r, "predict_steps", o.predict_steps);
    read(r, "steps_per_epoch", o.steps_per_epoch);
  }
  if (j.contains("sac")) {
    const auto& s = j.at("sac");
    detail::reject_unknown(s,
                           {"hidden", "lr", "gamma", "tau", "target_entropy_factor", "init_log_alpha", "batch_size",
                            "steps_per_epoch"},
                           "sac");
    read(s, "hidden", c.sac.hidden);
    read(s, "lr", c.sac.lr);
    read(s, "gamma", c.sac.gamma);
    read(s, "tau", c.sac.tau);
    read(s, "target_entropy_factor", c.sac.target_entropy_factor);
    read(s, "init_log_alpha", c.sac.init_log_alpha);
    read(s, "batch_size", c.sac.batch_size);
    read(s, "steps_per_epoch", c.sac.steps_per_epoch);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown(t,
                           {"epochs", "initial_transitions", "transitions_per_epoch", "buffer_capacity", "eval_interval",
                            "eval_trajectories", "eval_seeds", "final_eval_trajectories", "checkpoint_interval",
                            "save_transitions", "zhat_refresh_interval"},
                           "train");
    auto& o = c.train;
    read(t, "epochs", o.epochs);
    read(t, "initial_transitions", o.initial_transitions);
    read(t, "transitions_per_epoch", o.transitions_per_epoch);
    read(t, "buffer_capacity", o.buffer_capacity);
    read(t, "eval_interval", o.eval_interval);
    read(t, "eval_trajectories", o.eval_trajectories);
    read(t, "eval_seeds", o.eval_seeds);
    read(t, "final_eval_trajectories", o.final_eval_trajectories);
    read(t, "checkpoint_interval", o.checkpoint_interval);
    read(t, "save_transitions", o.save_transitions);
    read(t, "zhat_refresh_interval", o.zhat_refresh_interval);
  }
  validate(c);
  return c;
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["ablation"] = ablation_name(c.ablation);
  j["env"] = {{"name", c.env.name},
              {"max_steps", c.env.max_steps},
              {"mean_period", c.env.schedule.mean_period},
              {"period_std", c.env.schedule.period_std},
              {"min_period", c.env.schedule.min_period},
              {"obs_noise", c.env.obs_noise},
              {"fixed_omega", c.env.fixed_omega},
              {"meals_varied", c.env.glucose.meals_varied},
              {"adult", c.env.glucose.adult}};
  const auto& r = c.repr;
  j["repr"] = {{"latent_dim", r.latent_dim},
               {"window", r.window},
               {"levels", r.levels},
               {"keep_fraction", r.keep_fraction},
               {"filter_length", r.filter_length},
               {"trainable_filters", r.trainable_filters},
               {"alpha_y", r.alpha_y},
               {"td_gamma", r.td_gamma},
               {"kl_coef", r.kl_coef},
               {"decoder_coef", r.decoder_coef},
               {"encoder_grad_from_repr", r.encoder_grad_from_repr},
               {"encoder_hidden", r.encoder_hidden},
               {"decoder_hidden", r.decoder_hidden},
               {"w_hidden", r.w_hidden},
               {"lr", r.lr},
               {"soft_update", r.soft_update},
               {"batch_chunks", r.batch_chunks},
               {"predict_steps", r.predict_steps},
               {"steps_per_epoch", r.steps_per_epoch}};
  const auto& s = c.sac;
  j["sac"] = {{"hidden", s.hidden},
              {"lr", s.lr},
              {"gamma", s.gamma},
              {"tau", s.tau},
              {"target_entropy_factor", s.target_entropy_factor},
              {"init_log_alpha", s.init_log_alpha},
              {"batch_size", s.batch_size},
              {"steps_per_epoch", s.steps_per_epoch}};
  const auto& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"initial_transitions", t.initial_transitions},
                {"transitions_per_epoch", t.transitions_per_epoch},
                {"buffer_capacity", t.buffer_capacity},
                {"eval_interval", t.eval_interval},
                {"eval_trajectories", t.eval_trajectories},
                {"eval_seeds", t.eval_seeds},
                {"final_eval_trajectories", t.final_eval_trajectories},
                {"checkpoint_interval", t.checkpoint_interval},
                {"save_transitions", t.save_transitions},
                {"zhat_refresh_interval", t.zhat_refresh_interval}};
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParameterError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// Restores the large-scale hyperparameter values (hidden 300x3, batch 256,
/// buffer 10M, 200 encoder steps, per-environment trajectory lengths,
/// policy steps, initial transitions, M and alpha_Y). Epoch count, L and the
/// representation sizes have no large-scale reference value and are kept.
inline void apply_paper_scale(ExperimentConfig& c) {
  const bool glucose = c.env.name == "glucose";
  c.sac.hidden = {300, 300, 300};
  c.sac.lr = 3e-4;
  c.sac.tau = 5e-3;
  c.sac.target_entropy_factor = 1.0;
  c.sac.batch_size = 256;
  c.sac.steps_per_epoch = glucose ? 200 : 2000;
  c.repr.latent_dim = 5;
  c.repr.lr = 3e-4;
  c.repr.soft_update = 5e-3;
  c.repr.steps_per_epoch = 200;
  c.repr.batch_chunks = std::max<std::size_t>(1, 256 / c.repr.predict_steps);
  c.repr.levels = 2;
  c.repr.alpha_y = glucose ? 0.1 : 0.9;
  c.train.buffer_capacity = 10000000;
  c.train.initial_transitions = glucose ? 400 : 200;
  c.env.max_steps = glucose ? 200 : 800;
  c.train.transitions_per_epoch = glucose ? 200 : 800;
  c.train.eval_trajectories = 2;
  validate(c);
}

}  // namespace wisdom
