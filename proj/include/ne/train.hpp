#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <vector>

#include "ne/agent.hpp"
#include "ne/config.hpp"
#include "ne/envs.hpp"
#include "ne/metrics.hpp"
#include "ne/replay.hpp"

namespace ne {

struct EpisodeRecord {
  int cycle = 0;
  int task = 0;
  double ret = 0.0;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  std::vector<GrowPruneEvent> events;
  std::vector<EpisodeRecord> episodes;
  long head_isolation_violations = 0;
  std::unique_ptr<TD3Agent> agent;
  Rng rng;
};

/// Optional instrumentation: on_eval fires right after each metrics row is
/// appended, with the agent in its current state.
struct TrainHooks {
  std::function<void(const TD3Agent&, const MetricsRow&)> on_eval;
};

namespace detail {

inline Td3Config td3_from(const RunConfig& cfg) {
  Td3Config td3;
  td3.gamma = cfg.gamma;
  td3.rho = cfg.polyak_rho;
  td3.policy_delay = cfg.policy_delay;
  td3.exploration_sigma = cfg.exploration_sigma;
  td3.target_noise_sigma = cfg.target_noise_sigma;
  td3.target_noise_clip = cfg.target_noise_clip;
  td3.actor_adam.lr = cfg.actor_lr;
  td3.critic_adam.lr = cfg.critic_lr;
  return td3;
}

inline NeScope scope_from(const RunConfig& cfg) {
  if (cfg.ne_scope == "actor") return NeScope::Actor;
  if (cfg.ne_scope == "critic") return NeScope::Critic;
  return NeScope::Both;
}

inline bool review_enabled(const RunConfig& cfg, Mode mode) {
  if (cfg.experience_review == "on") return true;
  if (cfg.experience_review == "off") return false;
  return mode == Mode::NE;  // auto
}

/// Uniform whole-buffer probe (with replacement); states plus state-action
/// pairs from the same transitions.
struct ProbeBatches {
  Matrix states;
  Matrix state_actions;
};

inline ProbeBatches draw_probe(const ReplayBuffer& buffer, int probe_size,
                               int obs_dim, int act_dim, Rng& rng,
                               const Vector& fallback_obs) {
  ProbeBatches p;
  if (buffer.size() == 0) {
    p.states = fallback_obs.transpose();
    p.state_actions = Matrix::Zero(1, obs_dim + act_dim);
    p.state_actions.leftCols(obs_dim) = fallback_obs.transpose();
    return p;
  }
  p.states.resize(probe_size, obs_dim);
  p.state_actions.resize(probe_size, obs_dim + act_dim);
  for (int i = 0; i < probe_size; ++i) {
    const auto& tr = buffer.at_insertion(
        static_cast<std::size_t>(rng.below(buffer.size())));
    p.states.row(i) = tr.s.transpose();
    p.state_actions.row(i).head(obs_dim) = tr.s.transpose();
    p.state_actions.row(i).tail(act_dim) = tr.a.transpose();
  }
  return p;
}

inline Batch gather_batch(const ReplayBuffer& buffer,
                          const std::vector<std::size_t>& indices, int obs_dim,
                          int act_dim) {
  const long B = static_cast<long>(indices.size());
  Batch b;
  b.s.resize(B, obs_dim);
  b.a.resize(B, act_dim);
  b.r.resize(B);
  b.s_next.resize(B, obs_dim);
  b.done.resize(B);
  for (long i = 0; i < B; ++i) {
    const Transition& tr = buffer.at_insertion(indices[static_cast<std::size_t>(i)]);
    b.s.row(i) = tr.s.transpose();
    b.a.row(i) = tr.a.transpose();
    b.r(i) = tr.r;
    b.s_next.row(i) = tr.s_next.transpose();
    b.done(i) = tr.done ? 1.0 : 0.0;
  }
  return b;
}

/// Deterministic evaluation episodes (sigma = 0) on a fresh env instance.
inline double evaluate(const TD3Agent& agent, EnvId id, int episodes,
                       std::uint64_t seed, long eval_index, int padded_obs = 0) {
  Env env(id);
  Rng unused(0);
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Vector obs = env.reset(mix_seed(mix_seed(seed, 0xEEAA),
                                    static_cast<std::uint64_t>(eval_index * 1000 + ep)));
    if (padded_obs > 0) obs = pad_observation(obs, padded_obs);
    bool done = false;
    while (!done) {
      Vector a = agent.select_action(obs, 0.0, unused);
      auto r = env.step(a.head(env.spec().act_dim));
      total += r.reward;
      done = r.done;
      obs = padded_obs > 0 ? pad_observation(r.obs, padded_obs) : r.obs;
    }
  }
  return total / static_cast<double>(episodes);
}

struct HeadSnapshots {
  std::vector<Matrix> actor_w, c1_w, c2_w;
  std::vector<Vector> actor_b, c1_b, c2_b;
};

inline HeadSnapshots snapshot_banks(const TD3Agent& agent) {
  HeadSnapshots s;
  for (int t = 0; t < agent.task_count(); ++t) {
    s.actor_w.push_back(agent.actor_heads().heads[t].weights);
    s.actor_b.push_back(agent.actor_heads().heads[t].bias);
    s.c1_w.push_back(agent.critic1_heads().heads[t].weights);
    s.c1_b.push_back(agent.critic1_heads().heads[t].bias);
    s.c2_w.push_back(agent.critic2_heads().heads[t].weights);
    s.c2_b.push_back(agent.critic2_heads().heads[t].bias);
  }
  return s;
}

/// Inactive-head isolation: every bank slot except the active task must be
/// bit-identical to its snapshot.
inline long count_head_violations(const TD3Agent& agent, const HeadSnapshots& snap) {
  long violations = 0;
  for (int t = 0; t < agent.task_count(); ++t) {
    if (t == agent.current_task()) continue;
    if (!(agent.actor_heads().heads[t].weights == snap.actor_w[t]) ||
        !(agent.actor_heads().heads[t].bias == snap.actor_b[t]) ||
        !(agent.critic1_heads().heads[t].weights == snap.c1_w[t]) ||
        !(agent.critic1_heads().heads[t].bias == snap.c1_b[t]) ||
        !(agent.critic2_heads().heads[t].weights == snap.c2_w[t]) ||
        !(agent.critic2_heads().heads[t].bias == snap.c2_b[t]))
      violations++;
  }
  return violations;
}

}  // namespace detail

/// Full training loop: act, store, review-sample, TD3-update, fire topology
/// events every grow_interval while t <= t_end, evaluate and log on
/// eval_interval. Deterministic given (config, mode, seed).
inline RunResult train(const RunConfig& cfg, Mode mode, std::uint64_t seed,
                       const TrainHooks& hooks = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  auto wall_ms = [&]() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };

  RunResult result;
  Rng rng(mix_seed(seed, 0x5EED));

  const bool continual = cfg.continual();
  std::optional<ContinualEnv> cenv;
  std::optional<Env> env;
  int obs_dim = 0, act_dim = 0;
  double bound = 1.0;
  EnvId env_id = EnvId::PendulumSwingUp;
  if (continual) {
    cenv.emplace(cfg.continual_schedule());
    obs_dim = cenv->padded_obs_dim();
    act_dim = cenv->max_act_dim();
    bound = cenv->task_spec().action_bound;
  } else {
    env_id = env_from_string(cfg.env_name);
    env.emplace(env_id);
    obs_dim = env->spec().obs_dim;
    act_dim = env->spec().act_dim;
    bound = env->spec().action_bound;
  }

  const bool sparse_init =
      mode == Mode::NE || mode == Mode::Random ||
      (mode == Mode::Static && cfg.static_density == "sparse");
  auto agent = std::make_unique<TD3Agent>(obs_dim, act_dim, bound,
                                          cfg.hidden_dims, detail::td3_from(cfg),
                                          cfg.growth, sparse_init, rng);
  if (continual) agent->make_multi_head(cenv->task_count(), rng);

  ReplayBuffer buffer(cfg.buffer_capacity);
  EpsilonTracker tracker(cfg.epsilon_window, cfg.epsilon_lower_bound);
  const bool review = detail::review_enabled(cfg, mode);
  const bool topology_on = mode == Mode::NE || mode == Mode::Random;
  const GrowthSelector selector = mode == Mode::NE ? GrowthSelector::GradientTopK
                                                   : GrowthSelector::UniformRandom;
  const NeScope scope = detail::scope_from(cfg);

  std::uint64_t episode_counter = 0;
  auto episode_seed = [&]() {
    return mix_seed(mix_seed(seed, 0xE1450DE), episode_counter++);
  };

  Vector obs = continual ? cenv->reset(episode_seed()) : env->reset(episode_seed());
  double ep_return = 0.0;
  long task_start_step = 0;
  long grow_accum = 0, prune_accum = 0;
  long eval_count = 0;
  detail::HeadSnapshots snapshots;
  if (continual) snapshots = detail::snapshot_banks(*agent);

  const long max_steps = cfg.total_steps;
  for (long t = 1; t <= max_steps; ++t) {
    if (continual && cenv->finished()) break;

    // act
    const long steps_in_task = t - task_start_step;
    Vector a(act_dim);
    if (steps_in_task <= cfg.warmup_steps) {
      for (int i = 0; i < act_dim; ++i) a(i) = rng.uniform(-bound, bound);
    } else {
      a = agent->select_action(obs, cfg.exploration_sigma, rng);
    }

    Env::StepResult sr = continual ? cenv->step(a) : env->step(a);
    Transition tr;
    tr.s = obs;
    tr.a = a;
    tr.r = sr.reward;
    tr.s_next = sr.obs;
    // time-limit terminations bootstrap through (the desk envs only stop at
    // their horizon, which says nothing about the value of the final state)
    tr.done = false;
    buffer.add(std::move(tr));
    ep_return += sr.reward;
    obs = sr.obs;

    if (sr.done) {
      EpisodeRecord rec;
      rec.cycle = continual ? cenv->current_cycle() : 0;
      rec.task = continual ? cenv->current_task() : 0;
      rec.ret = ep_return;
      result.episodes.push_back(rec);
      ep_return = 0.0;
      obs = continual ? cenv->reset(episode_seed()) : env->reset(episode_seed());
      if (continual) {
        if (cenv->finished()) break;
        if (cenv->task_just_changed()) {
          result.head_isolation_violations +=
              detail::count_head_violations(*agent, snapshots);
          agent->switch_task(cenv->current_task());
          bound = cenv->task_spec().action_bound;
          agent->set_action_bound(bound);
          buffer.clear();
          task_start_step = t;
          snapshots = detail::snapshot_banks(*agent);
        }
      }
    }

    // learn
    if (steps_in_task > cfg.warmup_steps &&
        buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      const double eps = review ? tracker.epsilon() : 1.0;
      const SampledBatch sample =
          review_sample(buffer, eps, static_cast<std::size_t>(cfg.batch_size), rng);
      const Batch batch = detail::gather_batch(buffer, sample.indices, obs_dim, act_dim);
      agent->td3_update_step(batch, t, rng);
      if (continual)
        result.head_isolation_violations +=
            detail::count_head_violations(*agent, snapshots);
    }

    const bool eval_due = t % cfg.eval_interval == 0;
    const bool event_due = topology_on && t % cfg.growth.grow_interval == 0 &&
                           t <= cfg.growth.t_end;
    if (eval_due || event_due) {
      const detail::ProbeBatches probe = detail::draw_probe(
          buffer, cfg.growth.probe_batch_size, obs_dim, act_dim, rng, obs);
      const double actor_ratio =
          activated_ratio(agent->actor(), probe.states, cfg.growth.tau).aggregate;
      const double critic_ratio =
          activated_ratio(agent->critic1(), probe.state_actions, cfg.growth.tau)
              .aggregate;
      tracker.record(critic_ratio);

      if (event_due) {
        auto events = agent->apply_topology(t, probe.states, probe.state_actions,
                                            selector, mode == Mode::NE, scope, rng);
        for (const auto& ev : events) {
          grow_accum += ev.total_grown();
          prune_accum += ev.total_pruned();
          result.events.push_back(ev);
        }
      }
      if (eval_due) {
        const EnvId eval_id = continual
                                  ? cenv->schedule().tasks[static_cast<std::size_t>(
                                        cenv->current_task())]
                                  : env_id;
        MetricsRow row;
        row.step = t;
        row.eval_return = detail::evaluate(*agent, eval_id, cfg.eval_episodes, seed,
                                           eval_count, continual ? obs_dim : 0);
        row.actor_act_ratio = actor_ratio;
        row.critic_act_ratio = critic_ratio;
        row.actor_density = agent->actor().density();
        row.critic_density = agent->critic1().density();
        row.grow_count = grow_accum;
        row.prune_count = prune_accum;
        row.epsilon = tracker.epsilon();
        row.task_index = continual ? cenv->current_task() : 0;
        row.wall_ms = wall_ms();
        result.rows.push_back(row);
        if (hooks.on_eval) hooks.on_eval(*agent, row);
        grow_accum = prune_accum = 0;
        eval_count++;
      }
    }

    if (mode == Mode::Reset && t % cfg.reset_interval == 0)
      agent->reset_last_layers(rng);
  }

  result.agent = std::move(agent);
  result.rng = rng;
  return result;
}

}  // namespace ne
