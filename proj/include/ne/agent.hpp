#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ne/config.hpp"
#include "ne/envs.hpp"
#include "ne/metrics.hpp"
#include "ne/netcore.hpp"
#include "ne/replay.hpp"
#include "ne/rng.hpp"
#include "ne/topology.hpp"

namespace ne {

struct Td3Config {
  double gamma = 0.99;
  double rho = 0.005;  // polyak rate
  int policy_delay = 2;
  double exploration_sigma = 0.1;
  double target_noise_sigma = 0.2;
  double target_noise_clip = 0.5;
  AdamHyper actor_adam{.lr = 1e-4};
  AdamHyper critic_adam{.lr = 1e-3};
};

/// y = r + gamma * (1 - done) * min(q1_next, q2_next)
inline double td3_critic_target(double r, bool done, double gamma, double q1_next,
                                double q2_next) {
  return r + gamma * (done ? 0.0 : 1.0) * std::min(q1_next, q2_next);
}

struct Batch {
  Matrix s;       // B x obs
  Matrix a;       // B x act
  Vector r;       // B
  Matrix s_next;  // B x obs
  Vector done;    // B, 0/1
  long size() const { return s.rows(); }
};

struct Td3Losses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  bool actor_updated = false;
};

/// Per-task output heads with their optimizer slices; swapped into the last
/// layer of a network while the task is active. Inactive heads are outside
/// the computation graph entirely; their parameters cannot move.
struct HeadBank {
  std::vector<MaskedLayer> heads;
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
};

/// TD3 with twin critics, delayed policy updates, target smoothing and the
/// Neuroplastic Expansion controller applied per network.
class TD3Agent {
 public:
  TD3Agent(int obs_dim, int act_dim, double action_bound,
           const std::vector<int>& hidden, const Td3Config& td3,
           const GrowthConfig& growth, bool sparse_init, Rng& rng)
      : td3_(td3), growth_(growth), action_bound_(action_bound) {
    std::vector<LayerSpec> actor_spec, critic_spec;
    int prev = obs_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      actor_spec.push_back({prev, hidden[i], Activation::ReLU, i == 0});
      prev = hidden[i];
    }
    actor_spec.push_back({prev, act_dim, Activation::Tanh, true});
    prev = obs_dim + act_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      critic_spec.push_back({prev, hidden[i], Activation::ReLU, i == 0});
      prev = hidden[i];
    }
    critic_spec.push_back({prev, 1, Activation::Identity, true});

    actor_ = build_network(actor_spec, rng);
    critic1_ = build_network(critic_spec, rng);
    critic2_ = build_network(critic_spec, rng);
    if (sparse_init) {
      apply_masks(actor_, erdos_renyi_masks(actor_spec, growth_.sparsity, rng));
      apply_masks(critic1_, erdos_renyi_masks(critic_spec, growth_.sparsity, rng));
      apply_masks(critic2_, erdos_renyi_masks(critic_spec, growth_.sparsity, rng));
    }
    actor_target_ = actor_;
    critic1_target_ = critic1_;
    critic2_target_ = critic2_;
    actor_adam_ = make_adam_state(actor_, td3_.actor_adam);
    critic1_adam_ = make_adam_state(critic1_, td3_.critic_adam);
    critic2_adam_ = make_adam_state(critic2_, td3_.critic_adam);
  }

  int obs_dim() const { return actor_.input_dim(); }
  int act_dim() const { return actor_.output_dim(); }
  double action_bound() const { return action_bound_; }
  void set_action_bound(double b) { action_bound_ = b; }

  const MaskedNetwork& actor() const { return actor_; }
  const MaskedNetwork& critic1() const { return critic1_; }
  const MaskedNetwork& critic2() const { return critic2_; }
  const MaskedNetwork& actor_target() const { return actor_target_; }
  const MaskedNetwork& critic1_target() const { return critic1_target_; }
  const MaskedNetwork& critic2_target() const { return critic2_target_; }
  MaskedNetwork& mutable_actor() { return actor_; }
  MaskedNetwork& mutable_critic1() { return critic1_; }
  MaskedNetwork& mutable_critic2() { return critic2_; }
  const AdamState& actor_adam() const { return actor_adam_; }
  const AdamState& critic1_adam() const { return critic1_adam_; }
  const AdamState& critic2_adam() const { return critic2_adam_; }
  AdamState& mutable_actor_adam() { return actor_adam_; }
  AdamState& mutable_critic1_adam() { return critic1_adam_; }
  AdamState& mutable_critic2_adam() { return critic2_adam_; }
  const GrowthConfig& growth() const { return growth_; }
  const Td3Config& td3() const { return td3_; }
  bool has_gradients() const { return has_critic_grads_; }

  /// pi(s) scaled to bounds, plus optional exploration noise. sigma = 0 is
  /// fully deterministic and consumes no randomness.
  Vector select_action(const Vector& s, double sigma, Rng& rng) const {
    Matrix sm = s.transpose();
    const Matrix out = forward(actor_, sm).first;
    Vector a = action_bound_ * out.row(0).transpose();
    if (sigma > 0.0)
      for (int i = 0; i < a.size(); ++i) a(i) += rng.normal(0.0, sigma);
    return a.cwiseMax(-action_bound_).cwiseMin(action_bound_);
  }

  /// One TD3 training step. Critic targets use the target actor with clipped
  /// smoothing noise; the actor and all targets update every policy_delay
  /// steps. Dense gradients from the latest critic/actor objectives are kept
  /// for the next growth selection.
  Td3Losses td3_update_step(const Batch& batch, long step, Rng& rng) {
    const long B = batch.size();
    Td3Losses losses;

    // target action with clipped smoothing noise
    Matrix a_next = action_bound_ * forward(actor_target_, batch.s_next).first;
    for (int i = 0; i < a_next.rows(); ++i)
      for (int j = 0; j < a_next.cols(); ++j) {
        const double noise =
            std::clamp(rng.normal(0.0, td3_.target_noise_sigma),
                       -td3_.target_noise_clip, td3_.target_noise_clip);
        a_next(i, j) = std::clamp(a_next(i, j) + noise, -action_bound_,
                                  action_bound_);
      }
    Matrix sa_next(B, batch.s_next.cols() + a_next.cols());
    sa_next << batch.s_next, a_next;
    const Vector q1n = forward(critic1_target_, sa_next).first.col(0);
    const Vector q2n = forward(critic2_target_, sa_next).first.col(0);
    Vector y(B);
    for (long i = 0; i < B; ++i)
      y(i) = td3_critic_target(batch.r(i), batch.done(i) != 0.0, td3_.gamma,
                               q1n(i), q2n(i));

    Matrix sa(B, batch.s.cols() + batch.a.cols());
    sa << batch.s, batch.a;
    auto critic_step = [&](MaskedNetwork& critic, AdamState& adam,
                           FullGradients& retained) {
      const auto [q, cache] = forward(critic, sa);
      const Vector diff = q.col(0) - y;
      const double loss = diff.squaredNorm() / static_cast<double>(B);
      Matrix og = (2.0 / static_cast<double>(B)) * diff;
      FullGradients grads = backward(critic, cache, og);
      adam_update(critic, grads, adam, growth_.kappa);
      retained = std::move(grads);
      return loss;
    };
    losses.critic1 = critic_step(critic1_, critic1_adam_, critic1_grads_);
    losses.critic2 = critic_step(critic2_, critic2_adam_, critic2_grads_);
    has_critic_grads_ = true;

    if (step % td3_.policy_delay == 0) {
      // actor ascends Q1(s, pi(s))
      const auto [u, actor_cache] = forward(actor_, batch.s);
      Matrix a_pi = action_bound_ * u;
      Matrix sa_pi(B, batch.s.cols() + a_pi.cols());
      sa_pi << batch.s, a_pi;
      const auto [q, q_cache] = forward(critic1_, sa_pi);
      losses.actor = -q.col(0).mean();
      Matrix og = Matrix::Constant(B, 1, -1.0 / static_cast<double>(B));
      const FullGradients q_grads = backward(critic1_, q_cache, og);
      const Matrix da =
          action_bound_ * q_grads.input_grad.rightCols(a_pi.cols());
      FullGradients actor_grads = backward(actor_, actor_cache, da);
      adam_update(actor_, actor_grads, actor_adam_, growth_.kappa);
      actor_grads_ = std::move(actor_grads);
      has_actor_grads_ = true;
      losses.actor_updated = true;

      polyak(actor_target_, actor_, td3_.rho);
      polyak(critic1_target_, critic1_, td3_.rho);
      polyak(critic2_target_, critic2_, td3_.rho);
    }
    return losses;
  }

  /// Runs the NE pipeline on the selected networks and syncs target masks.
  /// probe_states feeds actor dormancy, probe_sa the critics. Growth uses the
  /// gradients retained from the most recent updates.
  std::vector<GrowPruneEvent> apply_topology(long step, const Matrix& probe_states,
                                             const Matrix& probe_sa,
                                             GrowthSelector selector,
                                             bool prune_enabled, NeScope scope,
                                             Rng& rng) {
    std::vector<GrowPruneEvent> events;
    if (!has_critic_grads_) return events;
    if (scope == NeScope::Both || scope == NeScope::Actor) {
      const FullGradients& g = has_actor_grads_ ? actor_grads_ : zero_grads(actor_);
      events.push_back(neuroplastic_event(actor_, actor_adam_, g, probe_states,
                                          step, growth_, rng, selector,
                                          prune_enabled));
    }
    if (scope == NeScope::Both || scope == NeScope::Critic) {
      events.push_back(neuroplastic_event(critic1_, critic1_adam_, critic1_grads_,
                                          probe_sa, step, growth_, rng, selector,
                                          prune_enabled));
      events.push_back(neuroplastic_event(critic2_, critic2_adam_, critic2_grads_,
                                          probe_sa, step, growth_, rng, selector,
                                          prune_enabled));
    }
    sync_target_masks();
    return events;
  }

  /// Copies online masks onto the targets (invoked after every topology event).
  void sync_target_masks() {
    for (std::size_t i = 0; i < actor_.layer_count(); ++i)
      actor_target_.layers[i].mask = actor_.layers[i].mask;
    for (std::size_t i = 0; i < critic1_.layer_count(); ++i) {
      critic1_target_.layers[i].mask = critic1_.layers[i].mask;
      critic2_target_.layers[i].mask = critic2_.layers[i].mask;
    }
  }

  /// Reset-baseline hook: reinitializes the last two layers of the online
  /// actor and critics (weights redrawn, biases zeroed, Adam moments cleared;
  /// masks untouched).
  void reset_last_layers(Rng& rng) {
    auto reset_net = [&](MaskedNetwork& net, AdamState& adam) {
      const std::size_t n = net.layer_count();
      for (std::size_t li = n >= 2 ? n - 2 : 0; li < n; ++li) {
        MaskedLayer& layer = net.layers[li];
        const double s = 1.0 / std::sqrt(static_cast<double>(layer.fan_in()));
        layer.weights = Matrix::NullaryExpr(layer.fan_out(), layer.fan_in(),
                                            [&]() { return rng.uniform(-s, s); });
        layer.bias.setZero();
        adam.m_w[li].setZero();
        adam.v_w[li].setZero();
        adam.m_b[li].setZero();
        adam.v_b[li].setZero();
      }
    };
    reset_net(actor_, actor_adam_);
    reset_net(critic1_, critic1_adam_);
    reset_net(critic2_, critic2_adam_);
  }

  // ---- continual-learning heads -------------------------------------------

  /// Replicates the output layer into one independent head per task (fresh
  /// weights per head); head 0 starts installed on all six networks.
  void make_multi_head(int n_tasks, Rng& rng) {
    if (n_tasks < 1) throw std::invalid_argument("make_multi_head: n_tasks >= 1");
    auto build_bank = [&](const MaskedNetwork& net, const AdamState& adam,
                          bool fresh_weights) {
      HeadBank bank;
      for (int t = 0; t < n_tasks; ++t) {
        MaskedLayer head = net.layers.back();
        if (fresh_weights && t > 0) {
          const double s = 1.0 / std::sqrt(static_cast<double>(head.fan_in()));
          head.weights = Matrix::NullaryExpr(head.fan_out(), head.fan_in(),
                                             [&]() { return rng.uniform(-s, s); });
          head.bias.setZero();
        }
        bank.heads.push_back(std::move(head));
        bank.m_w.push_back(Matrix::Zero(net.layers.back().fan_out(),
                                        net.layers.back().fan_in()));
        bank.v_w.push_back(Matrix::Zero(net.layers.back().fan_out(),
                                        net.layers.back().fan_in()));
        bank.m_b.push_back(Vector::Zero(net.layers.back().fan_out()));
        bank.v_b.push_back(Vector::Zero(net.layers.back().fan_out()));
      }
      return bank;
    };
    actor_heads_ = build_bank(actor_, actor_adam_, true);
    critic1_heads_ = build_bank(critic1_, critic1_adam_, true);
    critic2_heads_ = build_bank(critic2_, critic2_adam_, true);
    actor_target_heads_ = actor_heads_;
    critic1_target_heads_ = critic1_heads_;
    critic2_target_heads_ = critic2_heads_;
    current_task_ = 0;
    multi_head_ = true;
    install_heads(0);
  }

  bool multi_head() const { return multi_head_; }
  int current_task() const { return current_task_; }
  int task_count() const {
    return multi_head_ ? static_cast<int>(actor_heads_->heads.size()) : 1;
  }

  /// Stores the active heads back into their banks and installs task `t`'s.
  void switch_task(int t) {
    if (!multi_head_) throw std::logic_error("switch_task: not multi-head");
    if (t < 0 || t >= task_count())
      throw std::invalid_argument("switch_task: task index out of range");
    if (t == current_task_) return;
    stash_heads(current_task_);
    install_heads(t);
    current_task_ = t;
  }

  const HeadBank& actor_heads() const { return *actor_heads_; }
  const HeadBank& critic1_heads() const { return *critic1_heads_; }
  const HeadBank& critic2_heads() const { return *critic2_heads_; }

 private:
  static const FullGradients& zero_grads(const MaskedNetwork& net) {
    static thread_local FullGradients g;
    g.weight_grads.clear();
    g.bias_grads.clear();
    for (const auto& l : net.layers) {
      g.weight_grads.push_back(Matrix::Zero(l.fan_out(), l.fan_in()));
      g.bias_grads.push_back(Vector::Zero(l.fan_out()));
    }
    return g;
  }

  void stash_heads(int t) {
    auto stash = [&](MaskedNetwork& net, AdamState& adam, HeadBank& bank) {
      bank.heads[t] = net.layers.back();
      bank.m_w[t] = adam.m_w.back();
      bank.v_w[t] = adam.v_w.back();
      bank.m_b[t] = adam.m_b.back();
      bank.v_b[t] = adam.v_b.back();
    };
    stash(actor_, actor_adam_, *actor_heads_);
    stash(critic1_, critic1_adam_, *critic1_heads_);
    stash(critic2_, critic2_adam_, *critic2_heads_);
    auto stash_target = [&](MaskedNetwork& net, HeadBank& bank) {
      bank.heads[t] = net.layers.back();
    };
    stash_target(actor_target_, *actor_target_heads_);
    stash_target(critic1_target_, *critic1_target_heads_);
    stash_target(critic2_target_, *critic2_target_heads_);
  }

  void install_heads(int t) {
    auto install = [&](MaskedNetwork& net, AdamState& adam, HeadBank& bank) {
      net.layers.back() = bank.heads[t];
      adam.m_w.back() = bank.m_w[t];
      adam.v_w.back() = bank.v_w[t];
      adam.m_b.back() = bank.m_b[t];
      adam.v_b.back() = bank.v_b[t];
    };
    install(actor_, actor_adam_, *actor_heads_);
    install(critic1_, critic1_adam_, *critic1_heads_);
    install(critic2_, critic2_adam_, *critic2_heads_);
    auto install_target = [&](MaskedNetwork& net, HeadBank& bank) {
      net.layers.back() = bank.heads[t];
    };
    install_target(actor_target_, *actor_target_heads_);
    install_target(critic1_target_, *critic1_target_heads_);
    install_target(critic2_target_, *critic2_target_heads_);
  }

  Td3Config td3_;
  GrowthConfig growth_;
  double action_bound_;

  MaskedNetwork actor_, critic1_, critic2_;
  MaskedNetwork actor_target_, critic1_target_, critic2_target_;
  AdamState actor_adam_, critic1_adam_, critic2_adam_;

  FullGradients actor_grads_, critic1_grads_, critic2_grads_;
  bool has_actor_grads_ = false;
  bool has_critic_grads_ = false;

  bool multi_head_ = false;
  int current_task_ = 0;
  std::optional<HeadBank> actor_heads_, critic1_heads_, critic2_heads_;
  std::optional<HeadBank> actor_target_heads_, critic1_target_heads_,
      critic2_target_heads_;

 public:
  /// Serialization hooks (see checkpoint.hpp).
  MaskedNetwork& ckpt_net(int i) {
    MaskedNetwork* nets[6] = {&actor_,         &critic1_,        &critic2_,
                              &actor_target_,  &critic1_target_, &critic2_target_};
    return *nets[i];
  }
  AdamState& ckpt_adam(int i) {
    AdamState* st[3] = {&actor_adam_, &critic1_adam_, &critic2_adam_};
    return *st[i];
  }
  std::optional<HeadBank>& ckpt_bank(int i) {
    std::optional<HeadBank>* banks[6] = {&actor_heads_,         &critic1_heads_,
                                         &critic2_heads_,       &actor_target_heads_,
                                         &critic1_target_heads_, &critic2_target_heads_};
    return *banks[i];
  }
  void ckpt_set_multi_head(bool mh, int task) {
    multi_head_ = mh;
    current_task_ = task;
  }
};

}  // namespace ne
