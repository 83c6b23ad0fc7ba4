#pragma once

#include "isac/ddpg.hpp"

#include <vector>

namespace isac::marl {

/// One follower regulating its spacing error e and velocity error e~ (follower minus leader
/// speed) with a commanded acceleration: e' = e - e~ dt, e~' = e~ + u dt.
struct SpacingTaskConfig {
  Real dt = 0.1;
  int steps = 100;
  int episodes = 300;
  Real u_max = 3.0;
  Real init_spacing = 3.0;   // e0 ~ U(-init_spacing, init_spacing)
  Real init_velocity = 1.0;  // e~0 ~ U(-init_velocity, init_velocity)
  Real spacing_weight = 1.0;
  Real velocity_weight = 0.2;
  Real action_weight = 0.0;
  std::vector<Index> hidden{64, 64};
  Real actor_lr = 1e-3;
  Real critic_lr = 1e-3;
  Real gamma = 0.95;
  Real tau = 0.01;
  std::size_t batch = 64;
  std::size_t warmup = 640;
  Real noise_start = 0.3;
  Real noise_end = 0.02;
  int tail = 20;
};

struct SpacingTaskResult {
  std::vector<Real> mean_abs_spacing;  // per episode
  Real tail_mean = 0.0;                // over the last `tail` episodes
};

Vector spacing_observation(Real e, Real ev);

SpacingTaskResult run_spacing_task(const SpacingTaskConfig& config, std::uint64_t seed);

}  // namespace isac::marl
