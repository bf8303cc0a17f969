#include "ne/envs.hpp"

#include <gtest/gtest.h>

using namespace ne;

TEST(Envs, ResetDeterministicGivenSeed) {
  for (EnvId id : {EnvId::PendulumSwingUp, EnvId::PointMass, EnvId::TwoLinkReacher}) {
    Env a(id), b(id);
    const Vector oa = a.reset(123), ob = b.reset(123);
    ASSERT_TRUE(oa == ob) << to_string(id);
    ASSERT_FALSE(a.reset(124) == ob);
  }
}

TEST(Envs, PendulumObsOnUnitCircle) {
  Env env(EnvId::PendulumSwingUp);
  Vector obs = env.reset(7);
  EXPECT_NEAR(obs(0) * obs(0) + obs(1) * obs(1), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(obs(2), 0.0);  // starts at rest
  // starts hanging: theta near pi, so cos(theta) near -1
  EXPECT_LT(obs(0), -0.99);
}

TEST(Envs, PendulumEquilibriumAtHang) {
  // (theta = pi, theta_dot = 0, u = 0) is an equilibrium of
  // theta_ddot = 10 sin(theta) + u: the state stays put up to roundoff.
  Env env(EnvId::PendulumSwingUp);
  env.reset(0);
  env.set_state((Vector(2) << std::numbers::pi, 0.0).finished());
  Vector zero = Vector::Zero(1);
  auto r = env.step(zero);
  EXPECT_NEAR(std::abs(env.state()(0)), std::numbers::pi, 1e-12);
  EXPECT_NEAR(env.state()(1), 0.0, 1e-12);
}

TEST(Envs, PendulumDenseRewardNonPositiveAndUprightOptimal) {
  Env env(EnvId::PendulumSwingUp);
  env.reset(3);
  Vector u(1);
  double hanging_reward = 0;
  for (int i = 0; i < 50; ++i) {
    u << 0.0;
    hanging_reward = env.step(u).reward;
    ASSERT_LE(hanging_reward, 0.0);
  }
  // hanging is far from optimal: angle error around pi
  EXPECT_LT(hanging_reward, -5.0);
}

TEST(Envs, SparsePendulumRewardBinary) {
  Env env(EnvId::PendulumSparse);
  env.reset(4);
  Vector u(1);
  for (int i = 0; i < 100; ++i) {
    u << (i % 2 ? 2.0 : -2.0);
    const double r = env.step(u).reward;
    ASSERT_TRUE(r == 0.0 || r == 1.0);
  }
}

TEST(Envs, PointMassRestAtOriginStays) {
  Env env(EnvId::PointMass);
  env.reset(5);
  env.set_state(Vector::Zero(4));  // at the goal, at rest
  Vector zero = Vector::Zero(2);
  auto r = env.step(zero);
  EXPECT_TRUE(r.obs == Vector::Zero(4));
  EXPECT_DOUBLE_EQ(r.reward, 0.0);
}

TEST(Envs, PointMassHandIntegratedStep) {
  // from pos (1,0) with u = (-1,0): vel -> (-0.05, 0), pos -> (0.9975, 0)
  Env env(EnvId::PointMass);
  env.reset(42);
  env.set_state((Vector(4) << 1.0, 0.0, 0.0, 0.0).finished());
  Vector u(2);
  u << -1.0, 0.0;
  auto r = env.step(u);
  EXPECT_DOUBLE_EQ(r.obs(2), -0.05);
  EXPECT_DOUBLE_EQ(r.obs(3), 0.0);
  EXPECT_DOUBLE_EQ(r.obs(0), 0.9975);  // semi-implicit: position uses new velocity
  EXPECT_DOUBLE_EQ(r.obs(1), 0.0);
}

TEST(Envs, DeterministicTrajectoriesBitExact) {
  for (EnvId id : {EnvId::PendulumSwingUp, EnvId::PointMass, EnvId::TwoLinkReacher}) {
    Env a(id), b(id);
    a.reset(9);
    b.reset(9);
    Rng rng(10);
    const int act = a.spec().act_dim;
    for (int i = 0; i < a.spec().horizon; ++i) {
      Vector u(act);
      for (int k = 0; k < act; ++k) u(k) = rng.uniform(-1, 1);
      auto ra = a.step(u), rb = b.step(u);
      ASSERT_TRUE(ra.obs == rb.obs);
      ASSERT_EQ(ra.reward, rb.reward);
      ASSERT_EQ(ra.done, rb.done);
      if (ra.done) break;
    }
  }
}

TEST(Envs, ObservationsBoundedOverFullHorizon) {
  for (EnvId id : {EnvId::PendulumSwingUp, EnvId::PointMass, EnvId::TwoLinkReacher}) {
    Env env(id);
    env.reset(11);
    Rng rng(12);
    bool done = false;
    while (!done) {
      Vector u(env.spec().act_dim);
      for (int k = 0; k < u.size(); ++k)
        u(k) = rng.uniform(-env.spec().action_bound, env.spec().action_bound);
      auto r = env.step(u);
      ASSERT_TRUE(r.obs.allFinite());
      ASSERT_LT(r.obs.cwiseAbs().maxCoeff(), 100.0);
      done = r.done;
    }
  }
}

TEST(Envs, HorizonTerminatesExactly) {
  Env env(EnvId::PointMass);
  env.reset(13);
  Vector zero = Vector::Zero(2);
  for (int i = 1; i <= env.spec().horizon; ++i) {
    auto r = env.step(zero);
    ASSERT_EQ(r.done, i == env.spec().horizon);
  }
}

TEST(ContinualEnv, TaskSequenceAndCycles) {
  ContinualSchedule sched;
  sched.tasks = {EnvId::PendulumSwingUp, EnvId::TwoLinkReacher, EnvId::PointMass};
  sched.episodes_per_task = 2;
  sched.cycles = 2;
  ContinualEnv env(sched);
  EXPECT_EQ(env.padded_obs_dim(), 8);
  EXPECT_EQ(env.max_act_dim(), 2);

  std::vector<int> observed_tasks;
  std::uint64_t seed = 0;
  while (!env.finished()) {
    env.reset(seed++);
    if (env.finished()) break;
    observed_tasks.push_back(env.current_task());
    bool done = false;
    Vector zero = Vector::Zero(2);
    while (!done) done = env.step(zero).done;
  }
  const std::vector<int> expected{0, 0, 1, 1, 2, 2, 0, 0, 1, 1, 2, 2};
  EXPECT_EQ(observed_tasks, expected);
}

TEST(ContinualEnv, PadsObservationsWithTrailingZeros) {
  ContinualSchedule sched;
  sched.tasks = {EnvId::TwoLinkReacher, EnvId::PointMass};
  sched.episodes_per_task = 1;
  sched.cycles = 1;
  ContinualEnv env(sched);
  Vector obs = env.reset(1);
  EXPECT_EQ(obs.size(), 8);
  // run through reacher episode to reach the pointmass task
  Vector zero = Vector::Zero(2);
  bool done = false;
  while (!done) done = env.step(zero).done;
  obs = env.reset(2);
  EXPECT_EQ(env.current_task(), 1);
  EXPECT_EQ(obs.size(), 8);
  for (int i = 4; i < 8; ++i) EXPECT_DOUBLE_EQ(obs(i), 0.0);  // padded tail
}

TEST(ContinualEnv, ValidatesSchedule) {
  ContinualSchedule bad;
  bad.tasks = {};
  EXPECT_THROW(ContinualEnv{bad}, std::invalid_argument);
}
