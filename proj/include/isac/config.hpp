#pragma once

#include "isac/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace isac {

/// Unknown keys, wrong types and out-of-range values in a scenario file or override.
struct ConfigError : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct CountsConfig {
  int cavs = 6;
  int hdvs = 2;
  int rsus = 4;
  int lanes = 2;
  int subcarriers = 8;
  int antennas = 8;
  int cluster_size = 2;
};

struct GeometryConfig {
  Real lane_width = 4.0;
  Real road_length = 200.0;  // ring road circumference
  Real rsu_offset = 5.0;     // RSUs sit at y = -rsu_offset
  Real rsu_height = 15.0;
};

struct TimingConfig {
  Real long_slot = 1.0;
  Real short_slot = 0.1;
  int short_per_long = 10;
  int long_steps = 10;
  int episodes = 200;
  int eval_episodes = 5;
  Real max_substep = 0.02;
};

struct VehicleConfig {
  Real length = 4.0;
  Real lag = 0.02;
  Real time_gap = 1.0;
  Real standstill = 2.0;
  Real u_max = 5.0;
  Real alpha_max = 0.1;
  Real accel_min = -3.0;
  Real accel_max = 5.0;
  Real speed_min = 0.0;
  Real speed_max = 40.0;
  Real react_time = 1.0;
  Real init_speed_min = 18.0;
  Real init_speed_max = 24.0;
};

struct HdvConfig {
  Real desired_speed_min = 20.0;
  Real desired_speed_max = 28.0;
  Real max_accel = 1.5;
  Real comfort_decel = 2.0;
  Real min_gap = 2.0;
  Real time_headway = 1.5;
  Real accel_noise = 0.5;  // std of a per-slot acceleration disturbance
};

struct RadioConfig {
  Real power_dbm = 23.0;
  Real noise_dbm = -114.0;
  Real carrier_hz = 28e9;
  Real gain_ref = 1.0;
  Real bandwidth_hz = 100e6;
  Real light_speed = 3e8;
  Real min_rate = 1.0;  // bits/s/Hz a relay needs
  // derived at load
  Real power_w = 0.0;
  Real noise_w = 0.0;
};

struct SensingConfig {
  Real rcs = 1.0;
  Real matched_gain = 32.0;
  Real rho = 1e6;
  Real rho_tilde = 1e6;
};

struct ThresholdConfig {
  Real neighbor_gap = 50.0;
  Real voi = 0.05;        // bits
  Real voi_short = -1.0;  // < 0: share the long-term threshold
  Real ttc_cap = 20.0;
  Real speed_epsilon = 1e-3;
};

struct VoiConfig {
  bool enabled = true;
  int samples = 1000;
  int interval = 10;     // episodes between reselections
  int max_sources = 2;   // fixed slot count in the augmented state
  int min_rows = 50;
  int log_rows = 2000;   // rolling log length per vehicle
};

struct MarlConfig {
  std::vector<int> hidden{256, 256};
  Real actor_lr = 1e-4;
  Real critic_lr = 1e-3;
  Real gamma_long = 0.95;
  Real gamma_short = 0.0;
  Real tau = 0.01;
  int batch = 64;
  int long_capacity = 10000;
  int short_capacity = 1000000;
  int warmup_batches = 10;
  int update_every = 1;
  int long_updates = 1;
  int replay_interval = 10;
  int replay_updates = 20;
  Real noise_start = 0.3;
  Real noise_end = 0.02;
  bool centralized_critic = true;
  Real grad_clip = 10.0;
  Real cav_reward_scale = 0.1;
  Real rsu_reward_scale = 1.0;   // times -log10 of the per-target bound sum
};

struct PolicyConfig {
  bool learned_cav = true;
  bool learned_rsu = true;
  bool assist = true;          // linear spacing controller under the learned residual
  Real assist_gap_gain = 0.2;
  Real assist_speed_gain = 0.6;
  Real cruise_speed = 25.0;
  Real cruise_gain = 0.5;
  Real steer_share = 0.1;      // fraction of alpha_max the agent may add to lane keeping
  Real lane_gain = 0.01;
  Real heading_gain = 0.4;
  Real rsu_steer_max = 0.05;   // rad
  Real rsu_power_spread = 1.0;
};

struct OutputConfig {
  int checkpoint_every = 0;  // 0: final checkpoint only
  bool timeseries = true;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  CountsConfig counts;
  GeometryConfig geometry;
  TimingConfig timing;
  VehicleConfig vehicle;
  HdvConfig hdv;
  RadioConfig radio;
  SensingConfig sensing;
  ThresholdConfig thresholds;
  VoiConfig voi;
  MarlConfig marl;
  PolicyConfig policy;
  OutputConfig output;
};

/// Built-in defaults as JSON text; also the schema every file and override is checked against.
std::string default_config_json();

/// Parses a scenario document (possibly partial), applies dotted `key=value` overrides in order,
/// validates, and converts dBm fields to watts.
ScenarioConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
ScenarioConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Full config as pretty JSON (dBm fields only; derived watts are omitted).
std::string to_json(const ScenarioConfig& config);

void validate(const ScenarioConfig& config);

}  // namespace isac
