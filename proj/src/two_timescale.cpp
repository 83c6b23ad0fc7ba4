#include "isac/two_timescale.hpp"

#include <algorithm>

namespace isac::marl {

Real Schedule::noise(int episode) const {
  const int span = noise_decay_episodes > 0 ? noise_decay_episodes : std::max(episodes, 1);
  const Real frac = std::clamp(static_cast<Real>(episode) / std::max(span - 1, 1), 0.0, 1.0);
  return noise_start + (noise_end - noise_start) * frac;
}

namespace {

void accumulate(AgentLog& log, const LearnStats& s) {
  log.critic_loss += s.critic_loss;
  log.actor_grad_norm += s.actor_grad_norm;
  ++log.learn_steps;
}

}  // namespace

std::vector<EpisodeLog> train(TwoTimescaleEnv& env, std::vector<AgentBundle>& bundles, const Schedule& sch,
                              Rng& rng, int first_episode, const EpisodeHook& hook) {
  const std::size_t n = env.agent_count();
  if (bundles.size() != n) throw InvalidInput("train: one agent bundle per environment agent is required");
  const int long_steps = env.long_steps();
  const int short_steps = env.short_steps();
  if (long_steps < 1 || short_steps < 1) throw InvalidInput("train: step counts must be positive");

  std::vector<EpisodeLog> logs;
  std::vector<std::optional<Vector>> long_act(n), short_act(n);
  std::vector<Vector> long_obs(n), short_obs(n);
  std::size_t short_counter = 0;

  auto learn = [&](DdpgAgent& agent, AgentLog& log, int episode) {
    try {
      accumulate(log, agent.learn());
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " in episode " + std::to_string(episode));
    }
  };

  for (int e = 0; e < sch.episodes; ++e) {
    const int episode = first_episode + e;
    EpisodeLog log;
    log.episode = episode;
    log.noise = sch.learn ? sch.noise(episode) : 0.0;
    log.agents.resize(n);
    env.reset(episode, sch.training_worlds);

    for (int tau = 0; tau < long_steps; ++tau) {
      const Vector long_ctx = env.context(Timescale::Long);
      for (std::size_t i = 0; i < n; ++i) {
        long_act[i].reset();
        if (auto* a = bundles[i].agent(Timescale::Long)) {
          long_obs[i] = env.observe(i, Timescale::Long);
          long_act[i] = a->act(long_obs[i], log.noise, rng);
        }
      }
      env.apply_long(long_act);

      for (int t = 0; t < short_steps; ++t) {
        const Vector short_ctx = env.context(Timescale::Short);
        for (std::size_t i = 0; i < n; ++i) {
          short_act[i].reset();
          if (auto* a = bundles[i].agent(Timescale::Short)) {
            short_obs[i] = env.observe(i, Timescale::Short);
            short_act[i] = a->act(short_obs[i], log.noise, rng);
          }
        }
        const std::vector<Real> rewards = env.apply_short(short_act);
        ++log.short_slots;
        ++short_counter;
        const Vector next_ctx = env.context(Timescale::Short);
        for (std::size_t i = 0; i < n; ++i) {
          auto& alog = log.agents[i];
          alog.short_reward += rewards.at(i);
          auto* a = bundles[i].agent(Timescale::Short);
          if (!a || !sch.learn) continue;
          a->store({short_obs[i], *short_act[i], rewards[i], env.observe(i, Timescale::Short),
                    a->config().extra_dim > 0 ? short_ctx : Vector(), a->config().extra_dim > 0 ? next_ctx : Vector(),
                    Timescale::Short});
          ++alog.short_transitions;
          if (a->buffer().size() >= sch.warmup_short && short_counter % static_cast<std::size_t>(sch.update_every) == 0)
            learn(*a, alog, episode);
        }
      }

      const std::vector<Real> rewards = env.long_rewards();
      ++log.long_slots;
      const Vector next_ctx = env.context(Timescale::Long);
      for (std::size_t i = 0; i < n; ++i) {
        auto& alog = log.agents[i];
        alog.long_reward += rewards.at(i);
        auto* a = bundles[i].agent(Timescale::Long);
        if (!a || !sch.learn) continue;
        a->store({long_obs[i], *long_act[i], rewards[i], env.observe(i, Timescale::Long),
                  a->config().extra_dim > 0 ? long_ctx : Vector(), a->config().extra_dim > 0 ? next_ctx : Vector(),
                  Timescale::Long});
        ++alog.long_transitions;
        if (a->buffer().size() >= sch.warmup_long)
          for (int u = 0; u < sch.long_updates; ++u) learn(*a, alog, episode);
      }
    }

    // periodic replay of the long-term memory
    if (sch.learn && sch.replay_interval > 0 && (episode + 1) % sch.replay_interval == 0) {
      for (std::size_t i = 0; i < n; ++i) {
        auto* a = bundles[i].agent(Timescale::Long);
        if (!a || a->buffer().size() < sch.warmup_long) continue;
        for (int u = 0; u < sch.replay_updates; ++u) learn(*a, log.agents[i], episode);
      }
    }

    env.end_episode();
    for (auto& a : log.agents) {
      a.long_reward /= static_cast<Real>(log.long_slots);
      a.short_reward /= static_cast<Real>(log.short_slots);
      if (a.learn_steps > 0) {
        a.critic_loss /= static_cast<Real>(a.learn_steps);
        a.actor_grad_norm /= static_cast<Real>(a.learn_steps);
      }
    }
    if (hook) hook(log);
    logs.push_back(std::move(log));
  }
  return logs;
}

}  // namespace isac::marl
