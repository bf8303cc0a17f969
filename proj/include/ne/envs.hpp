#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "ne/netcore.hpp"
#include "ne/rng.hpp"

namespace ne {

enum class EnvId { PendulumSwingUp, PendulumSparse, TwoLinkReacher, PointMass };

inline std::string to_string(EnvId id) {
  switch (id) {
    case EnvId::PendulumSwingUp: return "pendulum";
    case EnvId::PendulumSparse: return "pendulum_sparse";
    case EnvId::TwoLinkReacher: return "reacher";
    case EnvId::PointMass: return "pointmass";
  }
  return "?";
}

inline EnvId env_from_string(const std::string& s) {
  if (s == "pendulum") return EnvId::PendulumSwingUp;
  if (s == "pendulum_sparse") return EnvId::PendulumSparse;
  if (s == "reacher") return EnvId::TwoLinkReacher;
  if (s == "pointmass") return EnvId::PointMass;
  throw std::invalid_argument("env: unknown environment '" + s + "'");
}

struct EnvSpec {
  EnvId id;
  int obs_dim = 0;
  int act_dim = 0;
  double action_bound = 1.0;  // symmetric per dimension
  int horizon = 0;
  double dt = 0.05;
};

inline EnvSpec env_spec(EnvId id) {
  switch (id) {
    case EnvId::PendulumSwingUp:
    case EnvId::PendulumSparse:
      return {id, 3, 1, 2.0, 200, 0.05};
    case EnvId::TwoLinkReacher:
      return {id, 8, 2, 1.0, 150, 0.05};
    case EnvId::PointMass:
      return {id, 4, 2, 1.0, 100, 0.05};
  }
  throw std::invalid_argument("env_spec: bad id");
}

/// Wrap an angle into (-pi, pi].
inline double wrap_angle(double theta) {
  double w = std::remainder(theta, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

/// Deterministic desk-scale continuous-control tasks. Semi-implicit Euler at
/// dt = 0.05; randomness enters only through reset(seed).
///
/// Pendulum convention: theta = 0 is upright, theta = pi hangs down;
/// theta_ddot = (g/l) sin(theta) + u with g = 10, m = l = 1. Episodes start
/// hanging and the reward penalizes the wrapped angle error from upright, so
/// the policy has to pump energy to swing up.
class Env {
 public:
  explicit Env(EnvId id) : spec_(env_spec(id)) {}

  const EnvSpec& spec() const { return spec_; }

  Vector reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    t_ = 0;
    switch (spec_.id) {
      case EnvId::PendulumSwingUp:
      case EnvId::PendulumSparse:
        theta_ = wrap_angle(rng_.uniform(std::numbers::pi - 0.1,
                                         std::numbers::pi + 0.1));
        theta_dot_ = 0.0;
        break;
      case EnvId::PointMass:
        px_ = rng_.uniform(-1.0, 1.0);
        py_ = rng_.uniform(-1.0, 1.0);
        vx_ = vy_ = 0.0;
        break;
      case EnvId::TwoLinkReacher: {
        q1_ = rng_.uniform(-std::numbers::pi, std::numbers::pi);
        q2_ = rng_.uniform(-std::numbers::pi, std::numbers::pi);
        qd1_ = qd2_ = 0.0;
        const double phi = rng_.uniform(-std::numbers::pi, std::numbers::pi);
        gx_ = std::cos(phi);
        gy_ = std::sin(phi);
        break;
      }
    }
    return observation();
  }

  struct StepResult {
    Vector obs;
    double reward = 0.0;
    bool done = false;
  };

  StepResult step(const Vector& action) {
    if (action.size() != spec_.act_dim)
      throw std::invalid_argument("env step: action dimension mismatch");
    const double b = spec_.action_bound;
    StepResult out;
    switch (spec_.id) {
      case EnvId::PendulumSwingUp:
      case EnvId::PendulumSparse: {
        const double u = std::clamp(action(0), -b, b);
        const double acc = 10.0 * std::sin(theta_) + u;  // g/l sin + u/(m l^2)
        theta_dot_ = std::clamp(theta_dot_ + acc * spec_.dt, -8.0, 8.0);
        theta_ = wrap_angle(theta_ + theta_dot_ * spec_.dt);
        const double angle_err = wrap_angle(theta_);
        if (spec_.id == EnvId::PendulumSwingUp)
          out.reward = -(angle_err * angle_err + 0.1 * theta_dot_ * theta_dot_ +
                         0.001 * u * u);
        else
          out.reward = std::abs(angle_err) < 0.2 ? 1.0 : 0.0;
        break;
      }
      case EnvId::PointMass: {
        const double ux = std::clamp(action(0), -b, b);
        const double uy = std::clamp(action(1), -b, b);
        vx_ = std::clamp(vx_ + ux * spec_.dt, -10.0, 10.0);
        vy_ = std::clamp(vy_ + uy * spec_.dt, -10.0, 10.0);
        px_ += vx_ * spec_.dt;
        py_ += vy_ * spec_.dt;
        out.reward = -std::sqrt(px_ * px_ + py_ * py_) -
                     0.01 * std::sqrt(ux * ux + uy * uy);
        break;
      }
      case EnvId::TwoLinkReacher: {
        const double u1 = std::clamp(action(0), -b, b);
        const double u2 = std::clamp(action(1), -b, b);
        qd1_ = u1;  // kinematic velocity control
        qd2_ = u2;
        q1_ = wrap_angle(q1_ + u1 * spec_.dt);
        q2_ = wrap_angle(q2_ + u2 * spec_.dt);
        const auto [tx, ty] = fingertip();
        out.reward = -std::hypot(tx - gx_, ty - gy_);
        break;
      }
    }
    t_ += 1;
    out.done = t_ >= spec_.horizon;
    out.obs = observation();
    return out;
  }

  Vector observation() const {
    Vector obs(spec_.obs_dim);
    switch (spec_.id) {
      case EnvId::PendulumSwingUp:
      case EnvId::PendulumSparse:
        obs << std::cos(theta_), std::sin(theta_), theta_dot_;
        break;
      case EnvId::PointMass:
        obs << px_, py_, vx_, vy_;
        break;
      case EnvId::TwoLinkReacher:
        obs << std::cos(q1_), std::sin(q1_), std::cos(q2_), std::sin(q2_), qd1_,
            qd2_, gx_, gy_;
        break;
    }
    return obs;
  }

  std::pair<double, double> fingertip() const {
    const double l1 = 0.6, l2 = 0.6;
    return {l1 * std::cos(q1_) + l2 * std::cos(q1_ + q2_),
            l1 * std::sin(q1_) + l2 * std::sin(q1_ + q2_)};
  }

  /// Raw dynamics state, mainly for tests that pin exact trajectories.
  /// Pendulum: [theta, theta_dot]; point mass: [px, py, vx, vy];
  /// reacher: [q1, q2, goal_x, goal_y] (joint velocities reset to zero).
  Vector state() const {
    switch (spec_.id) {
      case EnvId::PendulumSwingUp:
      case EnvId::PendulumSparse:
        return (Vector(2) << theta_, theta_dot_).finished();
      case EnvId::PointMass:
        return (Vector(4) << px_, py_, vx_, vy_).finished();
      case EnvId::TwoLinkReacher:
        return (Vector(4) << q1_, q2_, gx_, gy_).finished();
    }
    return {};
  }

  void set_state(const Vector& st) {
    switch (spec_.id) {
      case EnvId::PendulumSwingUp:
      case EnvId::PendulumSparse:
        theta_ = st(0);
        theta_dot_ = st(1);
        break;
      case EnvId::PointMass:
        px_ = st(0);
        py_ = st(1);
        vx_ = st(2);
        vy_ = st(3);
        break;
      case EnvId::TwoLinkReacher:
        q1_ = st(0);
        q2_ = st(1);
        gx_ = st(2);
        gy_ = st(3);
        qd1_ = qd2_ = 0.0;
        break;
    }
  }

 private:
  EnvSpec spec_;
  Rng rng_{0};
  int t_ = 0;
  // pendulum
  double theta_ = 0.0, theta_dot_ = 0.0;
  // point mass
  double px_ = 0.0, py_ = 0.0, vx_ = 0.0, vy_ = 0.0;
  // reacher
  double q1_ = 0.0, q2_ = 0.0, qd1_ = 0.0, qd2_ = 0.0, gx_ = 1.0, gy_ = 0.0;
};

inline Vector pad_observation(const Vector& obs, int dim) {
  if (obs.size() > dim)
    throw std::invalid_argument("pad_observation: target dim too small");
  Vector out = Vector::Zero(dim);
  out.head(obs.size()) = obs;
  return out;
}

struct ContinualSchedule {
  std::vector<EnvId> tasks;
  int episodes_per_task = 10;
  int cycles = 2;

  void validate() const {
    if (tasks.empty())
      throw std::invalid_argument("continual_tasks: at least one task required");
    if (episodes_per_task < 1)
      throw std::invalid_argument("episodes_per_task: must be >= 1");
    if (cycles < 1) throw std::invalid_argument("cycles: must be >= 1");
  }
};

/// Task-sequence controller: runs each task for episodes_per_task episodes,
/// cycling through the list. Observations are zero-padded to the widest task;
/// the caller routes per-task output heads with current_task().
class ContinualEnv {
 public:
  explicit ContinualEnv(ContinualSchedule schedule)
      : schedule_(validated(std::move(schedule))), env_(schedule_.tasks[0]) {
    for (EnvId id : schedule_.tasks) {
      const EnvSpec s = env_spec(id);
      obs_dim_ = std::max(obs_dim_, s.obs_dim);
      act_dim_ = std::max(act_dim_, s.act_dim);
    }
  }

  int padded_obs_dim() const { return obs_dim_; }
  int max_act_dim() const { return act_dim_; }
  int task_count() const { return static_cast<int>(schedule_.tasks.size()); }
  int current_task() const { return task_; }
  int current_cycle() const { return cycle_; }
  const ContinualSchedule& schedule() const { return schedule_; }
  const EnvSpec& task_spec() const { return env_.spec(); }

  bool finished() const { return cycle_ >= schedule_.cycles; }

  /// Starts the next episode, advancing the task/cycle pointers when the
  /// current task has run its episode quota.
  Vector reset(std::uint64_t seed) {
    if (episodes_done_ >= schedule_.episodes_per_task) {
      episodes_done_ = 0;
      task_ += 1;
      if (task_ >= task_count()) {
        task_ = 0;
        cycle_ += 1;
      }
      env_ = Env(schedule_.tasks[static_cast<std::size_t>(task_)]);
      task_changed_ = true;
    } else {
      task_changed_ = false;
    }
    return pad_observation(env_.reset(seed), obs_dim_);
  }

  /// True when the preceding reset() switched tasks.
  bool task_just_changed() const { return task_changed_; }

  Env::StepResult step(const Vector& padded_action) {
    const int d = env_.spec().act_dim;
    Vector a = padded_action.head(d);
    Env::StepResult r = env_.step(a);
    if (r.done) episodes_done_ += 1;
    r.obs = pad_observation(r.obs, obs_dim_);
    return r;
  }

 private:
  static ContinualSchedule validated(ContinualSchedule s) {
    s.validate();
    return s;
  }

  ContinualSchedule schedule_;
  Env env_;
  int obs_dim_ = 0;
  int act_dim_ = 0;
  int task_ = 0;
  int cycle_ = 0;
  int episodes_done_ = 0;
  bool task_changed_ = false;
};

}  // namespace ne
