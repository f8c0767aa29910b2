// wisdom: command-line front end.
//
//   wisdom train --config run.json [--paper-scale] [--ablation NAME|all] [--seed N]
//   wisdom eval --checkpoint DIR --env NAME --seeds a,b,c
//   wisdom decompose --input signal.csv --levels M [--haar-fixed]
//   wisdom case-study --out DIR
//   wisdom motivating-example --out DIR

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wisdom/case_study.hpp"
#include "wisdom/io.hpp"
#include "wisdom/signals.hpp"
#include "wisdom/trainer.hpp"

namespace fs = std::filesystem;
using namespace wisdom;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ContractError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config;
  bool paper_scale = false;
  std::string ablation;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::string output;
  std::string resume;
  bool save_transitions = false;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a) {
  ExperimentConfig base = load_config(a.config);
  if (a.paper_scale) apply_paper_scale(base);
  if (a.seed) base.seed = *a.seed;
  if (a.epochs) base.train.epochs = *a.epochs;
  if (!a.output.empty()) base.output_dir = a.output;
  if (a.save_transitions) base.train.save_transitions = true;

  std::vector<Ablation> runs;
  const bool matrix = a.ablation == "all";
  if (matrix)
    runs = all_ablations();
  else
    runs = {a.ablation.empty() ? base.ablation : parse_ablation(a.ablation)};
  if (matrix && !a.resume.empty()) throw ParameterError("--resume cannot be combined with --ablation all");

  nlohmann::json all = nlohmann::json::array();
  for (Ablation ab : runs) {
    ExperimentConfig cfg = base;
    cfg.ablation = ab;
    if (matrix) cfg.output_dir = (fs::path(base.output_dir) / ablation_name(ab)).string();
    validate(cfg);
    RunOptions opt;
    opt.verbose = a.verbose;
    if (!a.resume.empty()) opt.resume_from = fs::path(a.resume);
    std::cerr << "training " << cfg.name << " [" << ablation_name(ab) << ", seed " << cfg.seed << "] -> "
              << cfg.output_dir << "\n";
    const RunSummary s = run_experiment(cfg, opt);
    all.push_back(summary_json(s));
  }
  std::cout << (all.size() == 1 ? all[0] : all).dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string env;
  std::vector<std::uint64_t> seeds;
  std::size_t trajectories = 2;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto tr = Trainer::restore(ck);
  EnvConfig env = tr->config().env;
  if (!a.env.empty() && a.env != env.name) {
    env.name = a.env;
    env.fixed_omega.clear();
    const auto probe = make_env(env);
    if (probe->obs_dim() != tr->agent().obs_dim() || probe->action_dim() != tr->agent().act_dim())
      throw ParameterError("environment '" + a.env + "' does not match the checkpoint's observation/action sizes");
  }
  std::vector<EvalLogEntry> log;
  const EvalResult r = evaluate(env, tr->agent(), a.seeds, a.trajectories, a.out.empty() ? nullptr : &log);
  nlohmann::json j = {{"checkpoint", a.checkpoint},
                      {"env", env.name},
                      {"seeds", a.seeds},
                      {"trajectories_per_seed", a.trajectories},
                      {"mean_return", r.mean_return},
                      {"std_return", r.std_return},
                      {"mean_step_reward", r.mean_step_reward},
                      {"returns", r.returns},
                      {"nonstationarity_degree", r.nonstationarity_degree}};
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_json(fs::path(a.out) / "eval.json", j);
    write_transitions_csv(fs::path(a.out) / "transitions.csv", log);
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

// -------------------------------------------------------------- decompose

struct DecomposeArgs {
  std::string input;
  std::size_t levels = 2;
  bool haar_fixed = false;
  std::string checkpoint;
  std::string out = ".";
};

int cmd_decompose(const DecomposeArgs& a) {
  const Table t = read_signal_csv(a.input);
  FilterBank bank = FilterBank::haar();
  std::string source = "haar";
  if (!a.checkpoint.empty() && !a.haar_fixed) {
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const auto& y0 = ck.at("ynet.y0");
    const auto& y1 = ck.at("ynet.y1");
    bank = FilterBank{Tensor(y0.shape, y0.data), Tensor(y1.shape, y1.data), false};
    source = "checkpoint";
  }
  const auto levels = decompose_levels(t.values, bank, a.levels);
  write_coeff_csvs(a.out, levels, t.columns);
  nlohmann::json j = {{"input", a.input},       {"samples", t.values.rows()}, {"channels", t.columns},
                      {"levels", a.levels},     {"filters", source},          {"y0", std::vector<double>(bank.y0.data().begin(), bank.y0.data().end())},
                      {"y1", std::vector<double>(bank.y1.data().begin(), bank.y1.data().end())}};
  nlohmann::json lens = nlohmann::json::array();
  for (const auto& lv : levels) lens.push_back(lv.approximation.rows());
  j["coefficients_per_level"] = lens;
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------- case-study

struct CaseStudyArgs {
  std::string out;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::optional<std::size_t> repr_steps;
};

int cmd_case_study(const CaseStudyArgs& a) {
  CaseStudyOptions opt = default_case_study_options();
  if (a.repr_steps) opt.repr_steps = *a.repr_steps;
  nlohmann::json runs = nlohmann::json::array();
  double mean_best = 0;
  for (std::uint64_t seed : a.seeds) {
    const CaseStudyResult r = run_case_study(opt, seed);
    write_case_study(fs::path(a.out) / ("seed" + std::to_string(seed)), r);
    runs.push_back({{"seed", seed},
                    {"correlations", r.correlations},
                    {"best_abs_correlation", r.best_abs_correlation},
                    {"final_decoder_loss", r.final_losses.decoder},
                    {"final_kl", r.final_losses.kl}});
    mean_best += r.best_abs_correlation / static_cast<double>(a.seeds.size());
    std::cerr << "seed " << seed << ": best |corr(zhat_d, omega)| = " << r.best_abs_correlation << "\n";
  }
  const nlohmann::json j = {{"repr_steps", opt.repr_steps},
                            {"train_transitions", opt.train_transitions},
                            {"runs", runs},
                            {"mean_best_abs_correlation", mean_best}};
  write_json(fs::path(a.out) / "summary.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------ motivating-example

struct MotivatingArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t levels = 2;
};

int cmd_motivating(const MotivatingArgs& a) {
  Rng rng = make_rng(a.seed, "motivating_example");
  const MotivatingResult r = motivating_example(ChirpSpec{}, rng, a.levels);
  const std::size_t T = r.signal.clean.size();
  const auto u = upsample_hold(column(r.noisy_stack.approximation, 0), std::size_t{1} << a.levels, T);
  fs::create_directories(a.out);
  {
    std::ofstream out(fs::path(a.out) / "signal.csv", std::ios::trunc);
    out << "t,clean,noisy,trend,approx_hold\n";
    for (std::size_t t = 0; t < T; ++t)
      out << t << "," << format_double(r.signal.clean[t]) << "," << format_double(r.signal.noisy[t]) << ","
          << format_double(r.trend[t]) << "," << format_double(u[t]) << "\n";
  }
  Vec both;
  for (std::size_t t = 0; t < T; ++t) {
    both.push_back(r.signal.noisy[t]);
    both.push_back(r.signal.clean[t]);
  }
  write_coeff_csvs(a.out, decompose_levels(Tensor({T, 2}, std::move(both)), FilterBank::haar(), a.levels),
                   {"noisy", "clean"});
  const nlohmann::json j = {{"seed", a.seed},
                            {"levels", a.levels},
                            {"raw_corr", r.raw_corr},
                            {"approx_corr", r.approx_corr},
                            {"coeff_corr", r.coeff_corr},
                            {"gain", r.gain()}};
  write_json(fs::path(a.out) / "summary.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WISDOM: wavelet task representations for non-stationary reinforcement learning"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run an experiment from a JSON config");
  train->add_option("--config", ta.config, "JSON config file")->required()->check(CLI::ExistingFile);
  train->add_flag("--paper-scale", ta.paper_scale, "Use the large-scale hyperparameter values");
  train->add_option("--ablation", ta.ablation, "full | alpha_y0 | no_ynet | plain_sac | all");
  train->add_option("--seed", ta.seed, "Master seed (overrides the config)");
  train->add_option("--epochs", ta.epochs, "Epoch count (overrides the config)");
  train->add_option("--output", ta.output, "Output directory (overrides the config)");
  train->add_option("--resume", ta.resume, "Continue from this checkpoint directory")->check(CLI::ExistingDirectory);
  train->add_flag("--save-transitions", ta.save_transitions, "Write transitions.csv for the final evaluation");
  train->add_flag("-v,--verbose", ta.verbose, "Print a line per evaluation epoch");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on fresh schedules");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--env", ea.env, "Environment (default: the checkpoint's)");
  eval->add_option("--seeds", ea.seeds, "Comma-separated evaluation seeds")->required()->delimiter(',');
  eval->add_option("--trajectories", ea.trajectories, "Trajectories per seed")->check(CLI::PositiveNumber);
  eval->add_option("--out", ea.out, "Also write eval.json and transitions.csv here");

  DecomposeArgs da;
  auto* dec = app.add_subcommand("decompose", "Multi-level wavelet decomposition of a CSV signal");
  dec->add_option("--input", da.input, "CSV file, one column per channel, optional header")->required()->check(CLI::ExistingFile);
  dec->add_option("--levels", da.levels, "Decomposition levels M")->required()->check(CLI::PositiveNumber);
  dec->add_flag("--haar-fixed", da.haar_fixed, "Use the fixed Haar filters even when --checkpoint is given");
  dec->add_option("--checkpoint", da.checkpoint, "Use the learned filters of this checkpoint")->check(CLI::ExistingDirectory);
  dec->add_option("--out", da.out, "Directory for coeffs_level{m}.csv");

  CaseStudyArgs ca;
  auto* cs = app.add_subcommand("case-study", "Representation-only OscDamp case study with a scripted schedule");
  cs->add_option("--out", ca.out, "Output directory")->required();
  cs->add_option("--seeds", ca.seeds, "Comma-separated seeds")->delimiter(',');
  cs->add_option("--repr-steps", ca.repr_steps, "Representation training steps");

  MotivatingArgs ma;
  auto* mot = app.add_subcommand("motivating-example", "Noisy three-stage chirp vs. its Haar approximation");
  mot->add_option("--out", ma.out, "Output directory")->required();
  mot->add_option("--seed", ma.seed, "Noise seed");
  mot->add_option("--levels", ma.levels, "Decomposition levels")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return cmd_train(ta);
    if (eval->parsed()) return cmd_eval(ea);
    if (dec->parsed()) return cmd_decompose(da);
    if (cs->parsed()) return cmd_case_study(ca);
    if (mot->parsed()) return cmd_motivating(ma);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
