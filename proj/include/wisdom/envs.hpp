#pragma once

// Piecewise-stationary environments. The hidden task parameter omega changes
// within an episode following a TaskSchedule whose segment durations are drawn
// from round(Normal(mean_period, period_std)) clamped below at min_period.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "wisdom/errors.hpp"
#include "wisdom/rng.hpp"
#include "wisdom/tensor.hpp"

namespace wisdom {

// ---------------------------------------------------------------- schedules

struct Segment {
  Vec omega;
  std::size_t duration = 0;
};

struct TaskSchedule {
  std::vector<Segment> segments;
  double mean_period = 60.0;
  double period_std = 20.0;
  std::size_t min_period = 10;
  std::uint64_t seed = 0;

  std::size_t total_steps() const {
    std::size_t t = 0;
    for (const auto& s : segments) t += s.duration;
    return t;
  }

  /// Index of the segment containing `step`; steps past the end stay in the last one.
  std::size_t segment_at(std::size_t step) const {
    if (segments.empty()) throw ParameterError("empty schedule");
    std::size_t acc = 0;
    for (std::size_t h = 0; h < segments.size(); ++h) {
      acc += segments[h].duration;
      if (step < acc) return h;
    }
    return segments.size() - 1;
  }

  const Vec& omega_at(std::size_t step) const { return segments[segment_at(step)].omega; }
};

/// Draws omega_h given omega_0..h-1 (history-dependent task process).
using OmegaSampler = std::function<Vec(Rng&, const std::vector<Vec>& history)>;

inline std::size_t sample_duration(Rng& rng, double mean_period, double period_std, std::size_t min_period) {
  const double d = std::round(period_std > 0.0 ? normal(rng, mean_period, period_std) : mean_period);
  return std::max<std::size_t>(min_period, d < 0.0 ? 0 : static_cast<std::size_t>(d));
}

inline TaskSchedule make_schedule(std::size_t total_steps, double mean_period, double period_std,
                                  const OmegaSampler& sampler, std::uint64_t seed, std::size_t min_period = 10) {
  if (!(mean_period > 0.0)) throw ParameterError("mean_period must be > 0");
  if (period_std < 0.0) throw ParameterError("period_std must be >= 0");
  if (total_steps < 1) throw ParameterError("total_steps must be >= 1");
  if (min_period < 1) throw ParameterError("min_period must be >= 1");
  TaskSchedule s;
  s.mean_period = mean_period;
  s.period_std = period_std;
  s.min_period = min_period;
  s.seed = seed;
  Rng dur_rng = make_rng(seed, "schedule.duration");
  Rng omega_rng = make_rng(seed, "schedule.omega");
  std::vector<Vec> history;
  std::size_t covered = 0;
  while (covered < total_steps) {
    Segment seg;
    seg.duration = sample_duration(dur_rng, mean_period, period_std, min_period);
    seg.omega = sampler(omega_rng, history);
    history.push_back(seg.omega);
    covered += seg.duration;
    s.segments.push_back(std::move(seg));
  }
  return s;
}

/// Schedule with explicit (omega, duration) segments, e.g. scripted case studies.
inline TaskSchedule scripted_schedule(const std::vector<Segment>& segments) {
  if (segments.empty()) throw ParameterError("scripted schedule needs at least one segment");
  for (const auto& s : segments)
    if (s.duration < 1) throw ParameterError("segment durations must be >= 1");
  TaskSchedule t;
  t.segments = segments;
  t.period_std = 0.0;
  t.mean_period = static_cast<double>(t.total_steps()) / static_cast<double>(segments.size());
  t.min_period = 1;
  return t;
}

/// (T - mean T_h) / T with T the summed duration.
inline double nonstationarity_degree(const TaskSchedule& s) {
  if (s.segments.empty()) throw ParameterError("nonstationarity_degree: empty schedule");
  const double T = static_cast<double>(s.total_steps());
  const double mean = T / static_cast<double>(s.segments.size());
  return (T - mean) / T;
}

/// Uniform omega in [lo, hi], redrawn until it differs from the previous
/// segment's value by at least `min_change` so every boundary is a real change.
inline OmegaSampler uniform_omega_sampler(double lo, double hi, double min_change = 0.0) {
  return [=](Rng& rng, const std::vector<Vec>& history) {
    for (int tries = 0;; ++tries) {
      const double w = uniform(rng, lo, hi);
      if (history.empty() || tries >= 100 || std::abs(w - history.back()[0]) >= min_change) return Vec{w};
    }
  };
}

/// Uniform choice from a discrete set, excluding the previous value when the
/// set has more than one element.
inline OmegaSampler discrete_omega_sampler(Vec values, bool force_change = true) {
  return [values = std::move(values), force_change](Rng& rng, const std::vector<Vec>& history) {
    Vec pool = values;
    if (force_change && !history.empty() && pool.size() > 1)
      pool.erase(std::remove(pool.begin(), pool.end(), history.back()[0]), pool.end());
    const auto i = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    return Vec{pool[i]};
  };
}

inline OmegaSampler constant_omega_sampler(Vec omega) {
  return [omega = std::move(omega)](Rng&, const std::vector<Vec>&) { return omega; };
}

// ---------------------------------------------------------------- env interface

struct Transition {
  Vec s, a, s_next;
  double r = 0.0;
  bool done = false;       ///< true terminal: never bootstrapped through
  bool truncated = false;  ///< episode time limit reached (not terminal)
  Vec omega;               ///< hidden task parameter, evaluation only
  std::size_t step = 0;    ///< step index within the episode
  std::size_t segment = 0;
};

struct EnvState {
  Vec observation;
  std::size_t step_index = 0;
  std::size_t current_segment = 0;
  Vec true_omega;
};

struct ScheduleOptions {
  double mean_period = 60.0;
  double period_std = 20.0;
  std::size_t min_period = 10;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::string name() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual std::size_t omega_dim() const = 0;
  virtual std::size_t max_steps() const = 0;
  /// Starts a new episode; the schedule and initial state derive from `seed`.
  virtual Vec reset(std::uint64_t seed) = 0;
  /// Starts a new episode with a caller-supplied schedule.
  virtual Vec reset_with_schedule(std::uint64_t seed, TaskSchedule schedule) = 0;
  virtual Transition step(const Vec& action) = 0;
  virtual const EnvState& state() const = 0;
  virtual const TaskSchedule& schedule() const = 0;
  virtual std::size_t clamp_warnings() const = 0;
};

/// Shared bookkeeping: schedule, step counter, clamping, time limit.
class ScheduledEnv : public Environment {
 public:
  ScheduledEnv(std::size_t max_steps, ScheduleOptions sched, OmegaSampler sampler)
      : max_steps_(max_steps), sched_(sched), sampler_(std::move(sampler)) {
    if (max_steps_ < 1) throw ParameterError("max_steps must be >= 1");
  }

  std::size_t max_steps() const override { return max_steps_; }
  const EnvState& state() const override { return state_; }
  const TaskSchedule& schedule() const override { return schedule_; }
  std::size_t clamp_warnings() const override { return clamp_warnings_; }

  Vec reset(std::uint64_t seed) override {
    return reset_with_schedule(
        seed, make_schedule(max_steps_, sched_.mean_period, sched_.period_std, sampler_, seed, sched_.min_period));
  }

  Vec reset_with_schedule(std::uint64_t seed, TaskSchedule schedule) override {
    if (schedule.segments.empty()) throw ParameterError("empty schedule");
    schedule_ = std::move(schedule);
    rng_ = make_rng(seed, "env.dynamics");
    state_.step_index = 0;
    state_.current_segment = 0;
    state_.true_omega = schedule_.segments[0].omega;
    reset_dynamics();
    state_.observation = observe();
    episode_over_ = false;
    return state_.observation;
  }

  Transition step(const Vec& action) override {
    if (episode_over_) throw ContractError(name() + ": step after episode end; call reset");
    if (action.size() != action_dim()) throw DimensionError(name() + ": action has wrong dimension");
    Vec a = action;
    for (auto& x : a) {
      if (!std::isfinite(x)) throw DomainError(name() + ": non-finite action");
      if (x < -1.0 || x > 1.0) {
        x = std::clamp(x, -1.0, 1.0);
        ++clamp_warnings_;
      }
    }
    Transition t;
    t.s = state_.observation;
    t.a = a;
    t.omega = state_.true_omega;
    t.step = state_.step_index;
    t.segment = state_.current_segment;
    const auto [reward, terminal] = advance(a, state_.true_omega);
    t.r = reward;
    t.done = terminal;
    ++state_.step_index;
    state_.current_segment = schedule_.segment_at(state_.step_index);
    state_.true_omega = schedule_.segments[state_.current_segment].omega;
    state_.observation = observe();
    t.s_next = state_.observation;
    t.truncated = !terminal && state_.step_index >= max_steps_;
    episode_over_ = t.done || t.truncated;
    return t;
  }

 protected:
  struct StepOutcome {
    double reward;
    bool terminal;
  };
  virtual void reset_dynamics() = 0;
  virtual StepOutcome advance(const Vec& a, const Vec& omega) = 0;
  virtual Vec observe() const = 0;

  Rng rng_;

 private:
  std::size_t max_steps_;
  ScheduleOptions sched_;
  OmegaSampler sampler_;
  TaskSchedule schedule_;
  EnvState state_;
  std::size_t clamp_warnings_ = 0;
  bool episode_over_ = true;
};

// ---------------------------------------------------------------- VelTrack

/// 1-D point mass tracking a hidden target velocity (reward-change task).
class VelTrackEnv : public ScheduledEnv {
 public:
  static constexpr double kOmegaLo = 0.5, kOmegaHi = 3.0, kAccel = 0.2, kVmax = 5.0;

  explicit VelTrackEnv(std::size_t max_steps = 800, ScheduleOptions sched = {}, OmegaSampler sampler = nullptr)
      : ScheduledEnv(max_steps, sched, sampler ? std::move(sampler) : uniform_omega_sampler(kOmegaLo, kOmegaHi, 0.5)) {}

  std::string name() const override { return "veltrack"; }
  std::size_t obs_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  std::size_t omega_dim() const override { return 1; }

  static double next_velocity(double v, double a) { return std::clamp(v + kAccel * a, -kVmax, kVmax); }
  static double reward(double v_next, double omega) { return -std::abs(v_next - omega); }

  double velocity() const { return v_; }
  void set_velocity(double v) { v_ = v; }

 protected:
  void reset_dynamics() override { v_ = 0.0; }
  StepOutcome advance(const Vec& a, const Vec& omega) override {
    v_ = next_velocity(v_, a[0]);
    return {reward(v_, omega[0]), false};
  }
  Vec observe() const override { return {v_}; }

 private:
  double v_ = 0.0;
};

// ---------------------------------------------------------------- OscDamp

/// Damped oscillator x'' = -x - omega x' + a with hidden damping (dynamics-change task).
class OscDampEnv : public ScheduledEnv {
 public:
  static constexpr double kDt = 0.05;
  static Vec damping_set() { return {0.85, 0.9, 0.95, 1.0}; }

  explicit OscDampEnv(std::size_t max_steps = 800, ScheduleOptions sched = {}, OmegaSampler sampler = nullptr)
      : ScheduledEnv(max_steps, sched, sampler ? std::move(sampler) : discrete_omega_sampler(damping_set())) {}

  std::string name() const override { return "oscdamp"; }
  std::size_t obs_dim() const override { return 2; }
  std::size_t action_dim() const override { return 1; }
  std::size_t omega_dim() const override { return 1; }

  /// Semi-implicit Euler: velocity first, then position with the new velocity.
  static void integrate(double& x, double& v, double a, double omega) {
    v += kDt * (-x - omega * v + a);
    x += kDt * v;
  }
  static double reward(double x, double a) { return -(x * x + 0.1 * a * a); }

  void set_state(double x, double v) {
    x_ = x;
    v_ = v;
  }
  double position() const { return x_; }
  double velocity() const { return v_; }

 protected:
  void reset_dynamics() override {
    x_ = uniform(rng_, -1.0, 1.0);
    v_ = 0.0;
  }
  StepOutcome advance(const Vec& a, const Vec& omega) override {
    const double r = reward(x_, a[0]);  // cost of the state the action is applied in
    integrate(x_, v_, a[0], omega[0]);
    return {r, false};
  }
  Vec observe() const override { return {x_, v_}; }

 private:
  double x_ = 0.0, v_ = 0.0;
};

// ---------------------------------------------------------------- GlucoSim

/// Zone reward on the post-step glucose G and its change dG.
inline double glucose_reward(double G, double dG) {
  if (G < 70.0 || G > 200.0) return -20.0;
  if (G >= 100.0 && G <= 150.0) return 50.0;
  if (G < 100.0 && dG < 0.5) return -1.0;
  if (G > 150.0 && dG > 0.5) return -1.0;
  return 0.0;
}

inline bool glucose_terminal(double G) { return G < 70.0 || G > 200.0; }

/// Continuous action in [-1, 1] to a dose in {0..5}.
inline int action_to_dose(double a) {
  return static_cast<int>(std::lround((std::clamp(a, -1.0, 1.0) + 1.0) / 2.0 * 5.0));
}

struct GlucoseOptions {
  std::size_t meals_varied = 2;    ///< 1: lunch varies; 2: lunch and dinner vary
  bool adult = false;              ///< meal-size range 60-80 (adult) or 50-80 (adolescent)
  double basal_target = 170.0;     ///< glucose level without insulin
  double relax_rate = 0.02;        ///< per-step pull toward basal_target
  double insulin_effect = 1.0;     ///< mg/dL drop per dose unit per step
  double carb_effect = 0.8;        ///< mg/dL per gram of carbohydrate
  std::size_t absorption_steps = 8;
  double process_noise = 0.5;
};

/// Toy linear glucose model. A 200-step episode is one day; the meal plan
/// (7:00 45g, 12:00 lunch, 16:00 15g, 18:00 dinner, 23:00 10g) is mapped to
/// steps, and omega = (lunch size, dinner size) of the current segment.
class GlucoseEnv : public ScheduledEnv {
 public:
  explicit GlucoseEnv(std::size_t max_steps = 200, ScheduleOptions sched = {}, GlucoseOptions opt = {},
                      OmegaSampler sampler = nullptr)
      : ScheduledEnv(max_steps, sched, sampler ? std::move(sampler) : default_sampler(opt)), opt_(opt) {
    if (opt_.meals_varied != 1 && opt_.meals_varied != 2) throw ParameterError("meals_varied must be 1 or 2");
  }

  static OmegaSampler default_sampler(const GlucoseOptions& opt) {
    const double lo = opt.adult ? 60.0 : 50.0, hi = 80.0;
    const bool both = opt.meals_varied == 2;
    return [lo, hi, both](Rng& rng, const std::vector<Vec>&) {
      const double lunch = uniform(rng, lo, hi);
      return Vec{lunch, both ? uniform(rng, lo, hi) : 80.0};
    };
  }

  std::string name() const override { return "glucose"; }
  std::size_t obs_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }
  std::size_t omega_dim() const override { return 2; }

  /// One step of the glucose model with an explicit dose in {0..5}.
  /// Returns (G_next, reward, terminal).
  struct DoseOutcome {
    double G_next, reward;
    bool terminal;
  };
  DoseOutcome apply_dose(int dose, const Vec& omega) {
    if (dose < 0 || dose > 5) throw ParameterError("dose must be in {0..5}");
    const double meal = meal_intake(step_, omega);
    double Gn = G_ + opt_.relax_rate * (opt_.basal_target - G_) + opt_.carb_effect * meal -
                opt_.insulin_effect * static_cast<double>(dose);
    if (opt_.process_noise > 0.0) Gn += normal(rng_, 0.0, opt_.process_noise);
    const double dG = Gn - G_;
    prev_G_ = G_;
    G_ = Gn;
    ++step_;
    return {Gn, glucose_reward(Gn, dG), glucose_terminal(Gn)};
  }

  /// Carbohydrate grams absorbed at step t (each meal spread evenly over absorption_steps).
  double meal_intake(std::size_t t, const Vec& omega) const {
    const double day = static_cast<double>(max_steps());
    auto at = [day](double hour) { return static_cast<std::size_t>(std::lround(hour / 24.0 * day)); };
    const std::pair<std::size_t, double> plan[] = {
        {at(7), 45.0}, {at(12), omega[0]}, {at(16), 15.0}, {at(18), omega[1]}, {at(23), 10.0}};
    double g = 0.0;
    for (const auto& [start, size] : plan)
      if (t >= start && t < start + opt_.absorption_steps) g += size / static_cast<double>(opt_.absorption_steps);
    return g;
  }

  double glucose() const { return G_; }
  void set_glucose(double G) { G_ = prev_G_ = G; }
  const GlucoseOptions& options() const { return opt_; }

 protected:
  void reset_dynamics() override {
    G_ = prev_G_ = uniform(rng_, 110.0, 140.0);
    step_ = 0;
  }
  StepOutcome advance(const Vec& a, const Vec& omega) override {
    auto o = apply_dose(action_to_dose(a[0]), omega);
    return {o.reward, o.terminal};
  }
  Vec observe() const override {
    return {G_ / 100.0, (G_ - prev_G_) / 10.0, static_cast<double>(step_) / static_cast<double>(max_steps())};
  }

 private:
  GlucoseOptions opt_;
  double G_ = 120.0, prev_G_ = 120.0;
  std::size_t step_ = 0;
};

// ---------------------------------------------------------------- observation noise

/// Adds i.i.d. N(0, sigma^2) noise to every observation the agent sees.
/// Rewards, dynamics and the hidden omega are untouched.
class NoisyObservationEnv : public Environment {
 public:
  NoisyObservationEnv(std::unique_ptr<Environment> inner, double sigma) : inner_(std::move(inner)), sigma_(sigma) {
    if (!(sigma >= 0.0)) throw ParameterError("observation noise sigma must be >= 0");
  }

  std::string name() const override { return inner_->name(); }
  std::size_t obs_dim() const override { return inner_->obs_dim(); }
  std::size_t action_dim() const override { return inner_->action_dim(); }
  std::size_t omega_dim() const override { return inner_->omega_dim(); }
  std::size_t max_steps() const override { return inner_->max_steps(); }
  const TaskSchedule& schedule() const override { return inner_->schedule(); }
  std::size_t clamp_warnings() const override { return inner_->clamp_warnings(); }
  const EnvState& state() const override {
    noisy_state_ = inner_->state();
    noisy_state_.observation = last_obs_;
    return noisy_state_;
  }

  Vec reset(std::uint64_t seed) override {
    noise_rng_ = make_rng(seed, "env.obs_noise");
    return last_obs_ = corrupt(inner_->reset(seed));
  }
  Vec reset_with_schedule(std::uint64_t seed, TaskSchedule schedule) override {
    noise_rng_ = make_rng(seed, "env.obs_noise");
    return last_obs_ = corrupt(inner_->reset_with_schedule(seed, std::move(schedule)));
  }
  Transition step(const Vec& action) override {
    Transition t = inner_->step(action);
    t.s = last_obs_;
    t.s_next = last_obs_ = corrupt(t.s_next);
    return t;
  }

  Environment& inner() { return *inner_; }

 private:
  Vec corrupt(Vec obs) {
    if (sigma_ > 0.0)
      for (auto& x : obs) x += normal(noise_rng_, 0.0, sigma_);
    return obs;
  }

  std::unique_ptr<Environment> inner_;
  double sigma_;
  Rng noise_rng_;
  Vec last_obs_;
  mutable EnvState noisy_state_;
};

// ---------------------------------------------------------------- factory

struct EnvConfig {
  std::string name = "veltrack";
  std::size_t max_steps = 800;
  ScheduleOptions schedule;
  double obs_noise = 0.0;
  /// When non-empty, every segment uses this omega (stationary degenerate case).
  Vec fixed_omega;
  GlucoseOptions glucose;
};

inline std::unique_ptr<Environment> make_env(const EnvConfig& cfg) {
  OmegaSampler sampler = cfg.fixed_omega.empty() ? nullptr : constant_omega_sampler(cfg.fixed_omega);
  std::unique_ptr<Environment> env;
  if (cfg.name == "veltrack")
    env = std::make_unique<VelTrackEnv>(cfg.max_steps, cfg.schedule, sampler);
  else if (cfg.name == "oscdamp")
    env = std::make_unique<OscDampEnv>(cfg.max_steps, cfg.schedule, sampler);
  else if (cfg.name == "glucose")
    env = std::make_unique<GlucoseEnv>(cfg.max_steps, cfg.schedule, cfg.glucose, sampler);
  else
    throw ParameterError("unknown environment '" + cfg.name + "' (expected veltrack, oscdamp or glucose)");
  if (!cfg.fixed_omega.empty() && cfg.fixed_omega.size() != env->omega_dim())
    throw ParameterError("fixed_omega has wrong dimension for " + cfg.name);
  if (cfg.obs_noise > 0.0) env = std::make_unique<NoisyObservationEnv>(std::move(env), cfg.obs_noise);
  else if (cfg.obs_noise < 0.0) throw ParameterError("observation noise sigma must be >= 0");
  return env;
}

}  // namespace wisdom
