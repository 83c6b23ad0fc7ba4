#pragma once

#include "isac/ddpg.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace isac::marl {

/// An environment driven on two cadences: a long slot holds the long-term actions fixed while
/// `short_steps()` short slots execute. Agents are indexed 0..agent_count()-1; an agent may act
/// on either cadence or both. A missing action (nullopt) asks the environment for its default.
class TwoTimescaleEnv {
 public:
  virtual ~TwoTimescaleEnv() = default;

  virtual std::size_t agent_count() const = 0;
  virtual int long_steps() const = 0;
  virtual int short_steps() const = 0;

  virtual void reset(int episode, bool training) = 0;
  virtual Vector observe(std::size_t agent, Timescale t) const = 0;
  /// Joint observation handed to centralised critics; empty when unused.
  virtual Vector context(Timescale) const { return {}; }

  virtual void apply_long(std::span<const std::optional<Vector>> actions) = 0;
  /// Executes one short slot and returns one reward per agent.
  virtual std::vector<Real> apply_short(std::span<const std::optional<Vector>> actions) = 0;
  /// Rewards for the long slot that just finished, one per agent.
  virtual std::vector<Real> long_rewards() = 0;
  virtual void end_episode() {}
};

struct Schedule {
  int episodes = 1;
  bool learn = true;
  bool training_worlds = true;  // passed to reset(); evaluation uses its own world seeds
  Real noise_start = 0.3;
  Real noise_end = 0.02;
  int noise_decay_episodes = 0;  // 0: decay over all episodes
  std::size_t warmup_long = 640;
  std::size_t warmup_short = 640;
  int update_every = 1;          // short slots between learning steps
  int long_updates = 1;          // learning steps per long slot
  int replay_interval = 10;      // episodes between long-memory replays; 0 disables
  int replay_updates = 20;

  Real noise(int episode) const;
};

struct AgentLog {
  Real long_reward = 0.0;   // mean over long slots
  Real short_reward = 0.0;  // mean over short slots
  Real critic_loss = 0.0;   // mean over learning steps, both cadences
  Real actor_grad_norm = 0.0;
  std::size_t learn_steps = 0;
  std::size_t long_transitions = 0;
  std::size_t short_transitions = 0;
};

struct EpisodeLog {
  int episode = 0;
  Real noise = 0.0;
  std::size_t long_slots = 0;
  std::size_t short_slots = 0;
  std::vector<AgentLog> agents;
};

using EpisodeHook = std::function<void(const EpisodeLog&)>;

/// Runs `schedule.episodes` episodes starting at `first_episode`. `bundles[i]` belongs to
/// environment agent i. With schedule.learn false nothing is stored or updated and actions are
/// taken without exploration noise.
std::vector<EpisodeLog> train(TwoTimescaleEnv& env, std::vector<AgentBundle>& bundles, const Schedule& schedule,
                              Rng& rng, int first_episode = 0, const EpisodeHook& hook = {});

}  // namespace isac::marl
