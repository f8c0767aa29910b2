#include <gtest/gtest.h>

#include <cmath>

#include "wisdom/envs.hpp"

using namespace wisdom;

namespace {

double sample_mean(const std::vector<double>& x) {
  double m = 0;
  for (double v : x) m += v;
  return m / static_cast<double>(x.size());
}

double sample_std(const std::vector<double>& x) {
  const double m = sample_mean(x);
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

TaskSchedule equal_segments(std::size_t k, std::size_t d) {
  std::vector<Segment> segs(k, Segment{{1.0}, d});
  return scripted_schedule(segs);
}

}  // namespace

TEST(Schedule, DegenerateGaussianGivesEqualSegments) {
  auto s = make_schedule(180, 60, 0, uniform_omega_sampler(0.5, 3.0), 7);
  ASSERT_EQ(s.segments.size(), 3u);
  for (const auto& seg : s.segments) EXPECT_EQ(seg.duration, 60u);
}

TEST(Schedule, Deterministic) {
  auto a = make_schedule(1000, 60, 20, uniform_omega_sampler(0.5, 3.0), 42);
  auto b = make_schedule(1000, 60, 20, uniform_omega_sampler(0.5, 3.0), 42);
  ASSERT_EQ(a.segments.size(), b.segments.size());
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    EXPECT_EQ(a.segments[i].duration, b.segments[i].duration);
    EXPECT_EQ(a.segments[i].omega, b.segments[i].omega);
  }
  auto c = make_schedule(1000, 60, 20, uniform_omega_sampler(0.5, 3.0), 43);
  EXPECT_NE(a.segments[0].omega, c.segments[0].omega);
}

TEST(Schedule, CoversHorizonAndClamps) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = make_schedule(800, 60, 20, uniform_omega_sampler(0.5, 3.0), seed);
    EXPECT_GE(s.total_steps(), 800u);
    for (const auto& seg : s.segments) EXPECT_GE(seg.duration, 10u);
  }
  // Heavy tail: a wide Gaussian still never yields segments shorter than min_period.
  auto s = make_schedule(5000, 20, 40, uniform_omega_sampler(0.5, 3.0), 1, 10);
  for (const auto& seg : s.segments) EXPECT_GE(seg.duration, 10u);
}

TEST(Schedule, DurationStatistics) {
  Rng rng = make_rng(2024, "durations");
  std::vector<double> d;
  for (int i = 0; i < 10000; ++i) d.push_back(static_cast<double>(sample_duration(rng, 60, 20, 10)));
  EXPECT_NEAR(sample_mean(d), 60.0, 1.0);
  EXPECT_NEAR(sample_std(d), 20.0, 1.0);
}

TEST(Schedule, Errors) {
  EXPECT_THROW(make_schedule(100, 0, 0, uniform_omega_sampler(0, 1), 1), ParameterError);
  EXPECT_THROW(make_schedule(100, -5, 1, uniform_omega_sampler(0, 1), 1), ParameterError);
  EXPECT_THROW(make_schedule(0, 60, 20, uniform_omega_sampler(0, 1), 1), ParameterError);
  EXPECT_THROW(nonstationarity_degree(TaskSchedule{}), ParameterError);
}

TEST(Schedule, HistoryDependentSamplersChange) {
  auto s = make_schedule(5000, 60, 20, discrete_omega_sampler(OscDampEnv::damping_set()), 3);
  for (std::size_t h = 1; h < s.segments.size(); ++h) EXPECT_NE(s.segments[h].omega, s.segments[h - 1].omega);
  auto u = make_schedule(5000, 60, 20, uniform_omega_sampler(0.5, 3.0, 0.5), 3);
  for (std::size_t h = 1; h < u.segments.size(); ++h)
    EXPECT_GE(std::abs(u.segments[h].omega[0] - u.segments[h - 1].omega[0]), 0.5);
}

TEST(Degree, Examples) {
  EXPECT_EQ(nonstationarity_degree(equal_segments(1, 60)), 0.0);
  EXPECT_NEAR(nonstationarity_degree(equal_segments(100, 60)), 0.99, 1e-15);
  EXPECT_DOUBLE_EQ(nonstationarity_degree(scripted_schedule({{{1.0}, 30}, {{2.0}, 90}})), 0.5);
}

TEST(Degree, EqualSegmentsFormula) {
  for (std::size_t k : {1u, 2u, 3u, 7u, 10u, 100u})
    for (std::size_t d : {1u, 10u, 60u, 333u})
      EXPECT_EQ(nonstationarity_degree(equal_segments(k, d)),
                static_cast<double>(k - 1) / static_cast<double>(k))
          << k << " x " << d;
}

TEST(VelTrack, Examples) {
  EXPECT_EQ(VelTrackEnv::reward(1.7, 1.7), 0.0);
  EXPECT_EQ(VelTrackEnv::reward(1.0, 3.0), -2.0);
  EXPECT_DOUBLE_EQ(VelTrackEnv::next_velocity(1.0, 1.0), 1.2);
  EXPECT_EQ(VelTrackEnv::next_velocity(4.9, 1.0), 5.0);
  EXPECT_EQ(VelTrackEnv::next_velocity(-4.9, -1.0), -5.0);
}

TEST(VelTrack, OnTargetZeroAction) {
  VelTrackEnv env(50);
  env.reset_with_schedule(1, scripted_schedule({{{2.0}, 50}}));
  env.set_velocity(2.0);
  auto t = env.step({0.0});
  EXPECT_EQ(t.r, 0.0);
}

TEST(VelTrack, GreedyOracleTracksTarget) {
  VelTrackEnv env(800);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    env.reset(seed);
    double total = 0;
    std::size_t n = 0;
    std::size_t onset = 0, seg = 0;
    for (std::size_t t = 0; t < 800; ++t) {
      const double w = env.state().true_omega[0];
      if (env.state().current_segment != seg) {
        seg = env.state().current_segment;
        onset = t;
      }
      auto tr = env.step({std::clamp((w - env.velocity()) / VelTrackEnv::kAccel, -1.0, 1.0)});
      if (t >= onset + 10 && tr.segment == seg) {
        total += tr.r;
        ++n;
      }
    }
    EXPECT_GT(total / static_cast<double>(n), -0.2) << "seed " << seed;
  }
}

TEST(VelTrack, ClampsActionsAndCounts) {
  VelTrackEnv env(10);
  env.reset(1);
  auto t = env.step({3.0});
  EXPECT_EQ(t.a[0], 1.0);
  EXPECT_EQ(env.clamp_warnings(), 1u);
  EXPECT_DOUBLE_EQ(t.s_next[0], 0.2);
  EXPECT_THROW(env.step({0.1, 0.2}), DimensionError);
}

TEST(OscDamp, Examples) {
  OscDampEnv env(100);
  env.reset_with_schedule(0, scripted_schedule({{{0.9}, 100}}));
  env.set_state(0, 0);
  auto t = env.step({0.0});
  EXPECT_EQ(t.r, 0.0);
  EXPECT_EQ(t.s_next, (Vec{0.0, 0.0}));
  env.set_state(1, 0);
  t = env.step({0.0});
  EXPECT_EQ(t.r, -1.0);
}

TEST(OscDamp, ZeroActionDecaysForEveryDamping) {
  for (double w : OscDampEnv::damping_set()) {
    double x = 1.0, v = 0.0;
    for (int i = 0; i < 200; ++i) OscDampEnv::integrate(x, v, 0.0, w);
    EXPECT_LT(std::abs(x), 1.0) << w;
    // and through the env interface
    OscDampEnv env(200);
    env.reset_with_schedule(0, scripted_schedule({{{w}, 200}}));
    env.set_state(1.0, 0.0);
    Transition tr;
    for (int i = 0; i < 200; ++i) tr = env.step({0.0});
    EXPECT_LT(std::abs(tr.s_next[0]), 1.0);
    EXPECT_TRUE(tr.truncated);
    EXPECT_FALSE(tr.done);
  }
}

TEST(OscDamp, DampingChangesDynamics) {
  double x1 = 0.5, v1 = 1.0, x2 = 0.5, v2 = 1.0;
  OscDampEnv::integrate(x1, v1, 0.3, 0.85);
  OscDampEnv::integrate(x2, v2, 0.3, 1.0);
  EXPECT_NEAR(v1 - v2, OscDampEnv::kDt * 0.15 * 1.0, 1e-15);
}

TEST(Glucose, RewardExamples) {
  EXPECT_EQ(glucose_reward(120, 0.0), 50.0);
  EXPECT_EQ(glucose_reward(60, 0.0), -20.0);
  EXPECT_TRUE(glucose_terminal(60));
  EXPECT_EQ(glucose_reward(160, 1.0), -1.0);
  EXPECT_EQ(glucose_reward(90, -1.0), -1.0);
  EXPECT_EQ(glucose_reward(90, 1.0), 0.0);
  EXPECT_EQ(glucose_reward(160, 0.0), 0.0);
  EXPECT_EQ(glucose_reward(210, 0.0), -20.0);
}

TEST(Glucose, BoundaryGrid) {
  const double eps = 1e-9;
  auto expected = [](double G, double dG) {
    if (G < 70 || G > 200) return -20.0;
    if (G >= 100 && G <= 150) return 50.0;
    if (G < 100) return dG < 0.5 ? -1.0 : 0.0;
    return dG > 0.5 ? -1.0 : 0.0;
  };
  for (double Gb : {70.0, 100.0, 150.0, 200.0})
    for (double dG_base : {-0.5, 0.5})
      for (double dg : {-eps, 0.0, eps})
        for (double g : {-eps, 0.0, eps}) {
          const double G = Gb + g, dG = dG_base + dg;
          EXPECT_EQ(glucose_reward(G, dG), expected(G, dG)) << G << " " << dG;
        }
  EXPECT_EQ(glucose_reward(70, 0.0), -1.0);
  EXPECT_EQ(glucose_reward(70 - 1e-9, 0.0), -20.0);
  EXPECT_EQ(glucose_reward(100, -3), 50.0);
  EXPECT_EQ(glucose_reward(150, 3), 50.0);
  EXPECT_EQ(glucose_reward(150 + 1e-9, 0.5), 0.0);
  EXPECT_EQ(glucose_reward(150 + 1e-9, 0.5 + 1e-9), -1.0);
  EXPECT_EQ(glucose_reward(100 - 1e-9, 0.5), 0.0);
  EXPECT_EQ(glucose_reward(100 - 1e-9, 0.5 - 1e-9), -1.0);
  EXPECT_EQ(glucose_reward(200, 5), -1.0);
  EXPECT_EQ(glucose_reward(200 + 1e-9, 5), -20.0);
}

TEST(Glucose, DoseMappingAndErrors) {
  EXPECT_EQ(action_to_dose(-1.0), 0);
  EXPECT_EQ(action_to_dose(1.0), 5);
  EXPECT_EQ(action_to_dose(0.0), 3);  // 2.5 rounds away from zero
  EXPECT_EQ(action_to_dose(-0.2), 2);
  GlucoseEnv env;
  env.reset(1);
  EXPECT_THROW(env.apply_dose(6, {70, 80}), ParameterError);
  EXPECT_THROW(env.apply_dose(-1, {70, 80}), ParameterError);
  EXPECT_THROW(GlucoseEnv(200, {}, GlucoseOptions{.meals_varied = 3}), ParameterError);
}

TEST(Glucose, LowGlucoseTerminates) {
  GlucoseOptions opt;
  opt.process_noise = 0.0;
  GlucoseEnv env(200, {}, opt);
  env.reset(3);
  env.set_glucose(72);
  auto t = env.step({1.0});  // dose 5 pushes below 70
  EXPECT_TRUE(t.done);
  EXPECT_EQ(t.r, -20.0);
  EXPECT_THROW(env.step({0.0}), ContractError);
}

TEST(Glucose, MealsFollowSegmentOmega) {
  GlucoseEnv env(200);
  const double lunch_start = std::lround(12.0 / 24.0 * 200);
  EXPECT_DOUBLE_EQ(env.meal_intake(static_cast<std::size_t>(lunch_start), {64, 72}), 64.0 / 8.0);
  EXPECT_DOUBLE_EQ(env.meal_intake(150, {64, 72}), 72.0 / 8.0);
  EXPECT_EQ(env.meal_intake(0, {64, 72}), 0.0);
  for (bool adult : {false, true})
    for (std::size_t meals : {1u, 2u}) {
      GlucoseOptions o;
      o.adult = adult;
      o.meals_varied = meals;
      auto s = make_schedule(5000, 60, 20, GlucoseEnv::default_sampler(o), 9);
      for (const auto& seg : s.segments) {
        EXPECT_GE(seg.omega[0], adult ? 60.0 : 50.0);
        EXPECT_LE(seg.omega[0], 80.0);
        if (meals == 1) {
          EXPECT_EQ(seg.omega[1], 80.0);
        }
      }
    }
}

TEST(Glucose, ModerateDosingStaysInRange) {
  GlucoseEnv env(200);
  env.reset(5);
  std::size_t in_zone = 0;
  for (std::size_t t = 0; t < 200; ++t) {
    const double G = env.glucose();
    // crude proportional controller on dose
    const int dose = std::clamp(static_cast<int>(std::lround((G - 110.0) / 10.0 + 1.0)), 0, 5);
    auto tr = env.step({dose / 2.5 - 1.0});
    if (tr.r == 50.0) ++in_zone;
    if (tr.done || tr.truncated) break;
  }
  EXPECT_GT(in_zone, 100u);
}

TEST(Env, DeterministicStreams) {
  for (const char* name : {"veltrack", "oscdamp", "glucose"}) {
    EnvConfig cfg;
    cfg.name = name;
    cfg.max_steps = 200;
    cfg.obs_noise = 0.1;
    auto a = make_env(cfg), b = make_env(cfg);
    a->reset(77);
    b->reset(77);
    Rng act(5);
    for (int i = 0; i < 200; ++i) {
      Vec u{uniform(act, -1, 1)};
      auto ta = a->step(u), tb = b->step(u);
      ASSERT_EQ(ta.s_next, tb.s_next);
      ASSERT_EQ(ta.r, tb.r);
      ASSERT_EQ(ta.omega, tb.omega);
      if (ta.done || ta.truncated) break;
    }
  }
}

TEST(Env, OmegaMatchesScheduleSegment) {
  for (const char* name : {"veltrack", "oscdamp", "glucose"}) {
    EnvConfig cfg;
    cfg.name = name;
    cfg.max_steps = 400;
    auto env = make_env(cfg);
    env->reset(8);
    Rng act(6);
    for (int i = 0; i < 400; ++i) {
      auto t = env->step({uniform(act, -0.3, 0.3)});
      EXPECT_EQ(t.omega, env->schedule().omega_at(t.step));
      EXPECT_EQ(t.segment, env->schedule().segment_at(t.step));
      EXPECT_TRUE(std::isfinite(t.r));
      if (t.done || t.truncated) break;
    }
  }
}

TEST(Env, TruncationAtMaxSteps) {
  EnvConfig cfg;
  cfg.max_steps = 5;
  auto env = make_env(cfg);
  env->reset(1);
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(env->step({0.0}).truncated);
  auto t = env->step({0.0});
  EXPECT_TRUE(t.truncated);
  EXPECT_FALSE(t.done);
}

TEST(Env, FactoryErrorsAndFixedOmega) {
  EnvConfig cfg;
  cfg.name = "walker";
  EXPECT_THROW(make_env(cfg), ParameterError);
  cfg.name = "veltrack";
  cfg.obs_noise = -1;
  EXPECT_THROW(make_env(cfg), ParameterError);
  cfg.obs_noise = 0;
  cfg.fixed_omega = {1.5};
  auto env = make_env(cfg);
  env->reset(3);
  for (const auto& s : env->schedule().segments) EXPECT_EQ(s.omega, (Vec{1.5}));
  cfg.fixed_omega = {1.5, 2.0};
  EXPECT_THROW(make_env(cfg), ParameterError);
}

TEST(NoiseWrapper, ZeroSigmaIsBitIdentical) {
  auto plain = std::make_unique<OscDampEnv>(100);
  NoisyObservationEnv wrapped(std::make_unique<OscDampEnv>(100), 0.0);
  auto o1 = plain->reset(4);
  auto o2 = wrapped.reset(4);
  EXPECT_EQ(o1, o2);
  for (int i = 0; i < 100; ++i) {
    auto a = plain->step({0.3}), b = wrapped.step({0.3});
    EXPECT_EQ(a.s, b.s);
    EXPECT_EQ(a.s_next, b.s_next);
    EXPECT_EQ(a.r, b.r);
  }
  EXPECT_THROW(NoisyObservationEnv(std::make_unique<OscDampEnv>(100), -0.1), ParameterError);
}

TEST(NoiseWrapper, UnitSigmaStatistics) {
  const std::size_t steps = 10000;
  VelTrackEnv* raw = nullptr;
  auto inner = std::make_unique<VelTrackEnv>(steps);
  raw = inner.get();
  NoisyObservationEnv env(std::move(inner), 1.0);
  env.reset(11);
  std::vector<double> noise;
  Rng act(1);
  for (std::size_t i = 0; i < steps; ++i) {
    auto t = env.step({uniform(act, -1, 1)});
    noise.push_back(t.s_next[0] - raw->velocity());
    EXPECT_EQ(t.omega, raw->schedule().omega_at(t.step));
    EXPECT_EQ(t.r, VelTrackEnv::reward(raw->velocity(), t.omega[0]));
  }
  EXPECT_NEAR(sample_std(noise), 1.0, 0.05);
  EXPECT_NEAR(sample_mean(noise), 0.0, 0.05);
}

TEST(NoiseWrapper, HiddenOmegaUnchanged) {
  EnvConfig cfg;
  cfg.name = "oscdamp";
  cfg.max_steps = 300;
  auto plain = make_env(cfg);
  cfg.obs_noise = 1.0;
  auto noisy = make_env(cfg);
  plain->reset(21);
  noisy->reset(21);
  for (int i = 0; i < 300; ++i) {
    auto a = plain->step({0.0}), b = noisy->step({0.0});
    EXPECT_EQ(a.omega, b.omega);
    EXPECT_EQ(plain->state().true_omega, noisy->state().true_omega);
    EXPECT_EQ(a.r, b.r);
  }
}
