#include "isac/spacing_task.hpp"

#include <algorithm>
#include <cmath>

namespace isac::marl {

Vector spacing_observation(Real e, Real ev) {
  Vector s(2);
  s << e / 3.0, ev / 2.0;
  return s;
}

SpacingTaskResult run_spacing_task(const SpacingTaskConfig& cfg, std::uint64_t seed) {
  if (cfg.episodes < 1 || cfg.steps < 1 || !(cfg.dt > 0.0)) throw InvalidInput("run_spacing_task: invalid schedule");
  AgentConfig ac;
  ac.obs_dim = 2;
  ac.action_dim = 1;
  ac.action_low = Vector::Constant(1, -cfg.u_max);
  ac.action_high = Vector::Constant(1, cfg.u_max);
  ac.hidden = cfg.hidden;
  ac.actor_lr = cfg.actor_lr;
  ac.critic_lr = cfg.critic_lr;
  ac.gamma = cfg.gamma;
  ac.tau = cfg.tau;
  ac.batch = cfg.batch;
  ac.capacity = static_cast<std::size_t>(cfg.episodes) * static_cast<std::size_t>(cfg.steps);
  DdpgAgent agent("spacing", ac, derive_seed(seed, 1));
  Rng env_rng(derive_seed(seed, 2));
  Rng noise_rng(derive_seed(seed, 3));
  std::uniform_real_distribution<Real> e0(-cfg.init_spacing, cfg.init_spacing);
  std::uniform_real_distribution<Real> v0(-cfg.init_velocity, cfg.init_velocity);

  SpacingTaskResult out;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const Real frac = cfg.episodes > 1 ? static_cast<Real>(ep) / (cfg.episodes - 1) : 1.0;
    const Real noise = cfg.noise_start + (cfg.noise_end - cfg.noise_start) * frac;
    Real e = e0(env_rng);
    Real ev = v0(env_rng);
    Real sum_abs = 0.0;
    for (int t = 0; t < cfg.steps; ++t) {
      const Vector s = spacing_observation(e, ev);
      const Vector a = agent.act(s, noise, noise_rng);
      const Real u = a(0);
      e -= ev * cfg.dt;
      ev += u * cfg.dt;
      const Real r = -(cfg.spacing_weight * std::abs(e) + cfg.velocity_weight * std::abs(ev) +
                       cfg.action_weight * u * u);
      agent.store({s, a, r, spacing_observation(e, ev), Vector(), Vector(), Timescale::Long});
      sum_abs += std::abs(e);
      if (agent.buffer().size() >= cfg.warmup) agent.learn();
    }
    out.mean_abs_spacing.push_back(sum_abs / cfg.steps);
  }
  const int tail = std::clamp(cfg.tail, 1, cfg.episodes);
  Real acc = 0.0;
  for (int i = cfg.episodes - tail; i < cfg.episodes; ++i) acc += out.mean_abs_spacing[static_cast<std::size_t>(i)];
  out.tail_mean = acc / tail;
  return out;
}

}  // namespace isac::marl
