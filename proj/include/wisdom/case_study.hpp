#pragma once

// Fig. 9-style case study: train only the representation (encoder, Y_phi, W,
// decoder) on random-action OscDamp data, then read zhat along a scripted
// 7-change, 440-step damping schedule and correlate each zhat dimension with
// the hidden step function omega(t).

#include <cmath>
#include <vector>

#include "wisdom/io.hpp"
#include "wisdom/signals.hpp"
#include "wisdom/trainer.hpp"

namespace wisdom {

/// The scripted schedule: 8 segments (7 changes) over 440 steps.
inline TaskSchedule case_study_schedule() {
  return scripted_schedule({{{0.85}, 50},
                            {{1.0}, 60},
                            {{0.9}, 45},
                            {{0.95}, 65},
                            {{0.85}, 55},
                            {{1.0}, 50},
                            {{0.9}, 60},
                            {{0.95}, 55}});
}

struct CaseStudyOptions {
  std::size_t train_transitions = 20 * 440;  ///< random-action data for representation training
  std::size_t repr_steps = 1500;
  /// Behaviour policy: held uniform random actions, switching with this
  /// probability per step (i.i.d. actions barely excite the oscillator).
  double action_switch_prob = 0.015;
  ExperimentConfig base;  ///< env/repr settings; env is forced to OscDamp, 440 steps
};

inline CaseStudyOptions default_case_study_options() {
  CaseStudyOptions o;
  o.base.name = "case_study";
  o.base.env.name = "oscdamp";
  o.base.env.max_steps = 440;
  o.base.repr.kl_coef = 1e-3;
  o.base.repr.lr = 1e-3;
  o.base.repr.batch_chunks = 16;
  o.base.repr.predict_steps = 32;
  // Only the decoder + KL shape the encoder here; see the notes on the case study.
  o.base.repr.encoder_grad_from_repr = false;
  o.base.train.buffer_capacity = 100000;
  return o;
}

struct CaseStudyResult {
  std::vector<double> omega;              ///< hidden omega(t), t = 0..439
  std::vector<std::size_t> segment;       ///< schedule segment of step t
  Tensor z;                               ///< encoder posterior means, [T x D]
  std::vector<LevelCoeffs> coeffs;        ///< u_m, g_m of z under the learned filters
  std::vector<std::vector<double>> zhat;  ///< zhat(t) from the window ending at t, [T][D]
  std::vector<double> correlations;       ///< Pearson(zhat_d, omega) per dimension
  double best_abs_correlation = 0;        ///< max_d |corr_d|
  ReprLosses final_losses;
};

inline CaseStudyResult run_case_study(const CaseStudyOptions& opt, std::uint64_t seed) {
  ExperimentConfig cfg = opt.base;
  cfg.seed = seed;
  cfg.env.name = "oscdamp";
  cfg.env.max_steps = 440;
  cfg.ablation = Ablation::Full;
  Trainer tr(cfg);
  Rng act_rng = make_rng(seed, "case_study.actions");
  tr.collect(opt.train_transitions, sticky_random_policy(1, opt.action_switch_prob, act_rng));
  ReprLosses last;
  const std::size_t chunk = 100;
  for (std::size_t done = 0; done < opt.repr_steps; done += chunk)
    last = tr.train_representation_phase(std::min(chunk, opt.repr_steps - done));

  auto env = make_env(cfg.env);
  const TaskSchedule sched = case_study_schedule();
  EpisodeLog ep = rollout(*env, tr.agent(), derive_seed(seed, "case_study.episode"), sticky_random_policy(1, opt.action_switch_prob, act_rng), &sched);
  const Tensor table = tr.agent().context_table(ep.transitions);  // row t+1: window ending at t

  CaseStudyResult r;
  r.final_losses = last;
  const std::size_t T = ep.transitions.size(), D = tr.agent().ctx_dim();
  r.zhat.assign(T, std::vector<double>(D));
  r.z = tr.agent().encode_means(ep.transitions, 0, T);
  {
    NoGradGuard ng;
    r.coeffs = decompose_levels(r.z, tr.agent().ynet().bank(), tr.agent().ynet().levels());
  }
  for (std::size_t t = 0; t < T; ++t) {
    r.omega.push_back(ep.transitions[t].omega[0]);
    r.segment.push_back(ep.transitions[t].segment);
    for (std::size_t d = 0; d < D; ++d) r.zhat[t][d] = table.at(t + 1, d);
  }
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<double> col(T);
    for (std::size_t t = 0; t < T; ++t) col[t] = r.zhat[t][d];
    const double c = pearson(col, r.omega);
    r.correlations.push_back(c);
    r.best_abs_correlation = std::max(r.best_abs_correlation, std::abs(c));
  }
  return r;
}

/// Per-step dump for Fig. 9-style panels:
///   step,omega,segment,z<d>...,zhat<d>...,u<m>_<d>...,g<m>_<d>...
/// with coefficients held over the 2^m steps they summarise, plus the
/// coefficient-resolution files coeffs_level{m}.csv next to it.
inline void write_case_study(const std::filesystem::path& dir, const CaseStudyResult& r) {
  std::filesystem::create_directories(dir);
  const std::size_t T = r.omega.size(), D = r.z.cols(), M = r.coeffs.size();
  std::vector<std::string> names;
  for (std::size_t d = 0; d < D; ++d) names.push_back("z" + std::to_string(d));
  write_coeff_csvs(dir, r.coeffs, names);
  std::vector<std::vector<double>> held;  // per level: u columns then g columns
  for (std::size_t m = 0; m < M; ++m)
    for (const Tensor* c : {&r.coeffs[m].approximation, &r.coeffs[m].detail})
      for (std::size_t d = 0; d < D; ++d) held.push_back(upsample_hold(column(*c, d), std::size_t{1} << (m + 1), T));
  std::ofstream out(dir / "case_study.csv", std::ios::trunc);
  if (!out) throw ContractError("cannot write " + (dir / "case_study.csv").string());
  out << "step,omega,segment";
  for (std::size_t d = 0; d < D; ++d) out << ",z" << d;
  for (std::size_t d = 0; d < D; ++d) out << ",zhat" << d;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t d = 0; d < D; ++d) out << ",u" << m + 1 << "_" << d;
    for (std::size_t d = 0; d < D; ++d) out << ",g" << m + 1 << "_" << d;
  }
  out << "\n";
  for (std::size_t t = 0; t < T; ++t) {
    out << t << "," << format_double(r.omega[t]) << "," << r.segment[t];
    for (std::size_t d = 0; d < D; ++d) out << "," << format_double(r.z.at(t, d));
    for (std::size_t d = 0; d < D; ++d) out << "," << format_double(r.zhat[t][d]);
    for (const auto& col : held) out << "," << format_double(col[t]);
    out << "\n";
  }
}

}  // namespace wisdom
