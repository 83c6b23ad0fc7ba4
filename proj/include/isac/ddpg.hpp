#pragma once

#include "isac/mlp.hpp"
#include "isac/replay.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace isac::marl {

struct AgentConfig {
  Index obs_dim = 1;
  Index extra_dim = 0;   // centralised-critic context appended in front of the critic input
  Index action_dim = 1;
  Vector action_low;     // defaults to -1
  Vector action_high;    // defaults to +1
  std::vector<Index> hidden{256, 256};
  Real actor_lr = 1e-4;
  Real critic_lr = 1e-4;
  Real gamma = 0.95;
  Real tau = 0.01;       // soft-update rate
  Real reward_scale = 1.0;
  std::size_t capacity = 10000;
  std::size_t batch = 64;
  Real grad_clip = 10.0;  // global-norm clip; <= 0 disables
  Timescale timescale = Timescale::Long;
};

struct LearnStats {
  Real critic_loss = 0.0;
  Real actor_grad_norm = 0.0;
};

/// One DDPG learner: actor, critic, their targets, Adam states and a replay buffer.
class DdpgAgent {
 public:
  DdpgAgent(std::string name, AgentConfig config, std::uint64_t seed);

  const std::string& name() const { return name_; }
  const AgentConfig& config() const { return cfg_; }

  /// Deterministic policy output scaled into the action box.
  Vector policy(const Vector& state) const;

  /// Policy plus Gaussian noise (std = noise_scale * half range), clipped to the box.
  Vector act(const Vector& state, Real noise_scale, Rng& rng) const;

  /// One critic step toward y = r + gamma Q'(s', mu'(s')); returns the pre-step loss.
  Real critic_update(std::span<const Transition* const> batch);

  /// One actor step along the sampled policy gradient; returns the actor gradient norm.
  Real actor_update(std::span<const Transition* const> batch);

  /// Ascends mean Q given dQ/da per sample (columns), chaining through the output scaling.
  Real policy_gradient_step(const Matrix& states, const Matrix& action_grad);

  void soft_update_targets();

  void store(Transition t) { buffer_.push(std::move(t)); }
  const ReplayBuffer& buffer() const { return buffer_; }

  /// Samples a batch from the buffer, updates critic and actor, then soft-updates targets.
  LearnStats learn();

  Mlp<>& actor() { return actor_; }
  Mlp<>& critic() { return critic_; }
  Mlp<>& target_actor() { return target_actor_; }
  Mlp<>& target_critic() { return target_critic_; }
  const Mlp<>& actor() const { return actor_; }
  const Mlp<>& critic() const { return critic_; }
  const Mlp<>& target_actor() const { return target_actor_; }
  const Mlp<>& target_critic() const { return target_critic_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

  bool all_finite() const;

 private:
  Matrix critic_input(const Matrix& extra, const Matrix& states, const Matrix& actions) const;
  Matrix scale_actions(const Matrix& tanh_out) const;

  std::string name_;
  AgentConfig cfg_;
  Vector center_, half_;
  Mlp<> actor_, critic_, target_actor_, target_critic_;
  Adam<> actor_opt_, critic_opt_;
  ReplayBuffer buffer_;
  Rng rng_;
};

/// The learners owned by one entity. CAVs act on both time scales (long-term driving
/// controls, short-term relay requests); RSUs only on the short one (beams).
struct AgentBundle {
  std::string name;
  std::optional<DdpgAgent> long_agent;
  std::optional<DdpgAgent> short_agent;

  DdpgAgent* agent(Timescale t) {
    auto& a = t == Timescale::Long ? long_agent : short_agent;
    return a ? &*a : nullptr;
  }
  const DdpgAgent* agent(Timescale t) const {
    const auto& a = t == Timescale::Long ? long_agent : short_agent;
    return a ? &*a : nullptr;
  }
};

}  // namespace isac::marl
