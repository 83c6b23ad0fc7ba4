#include "isac/config.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace isac {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CountsConfig, cavs, hdvs, rsus, lanes, subcarriers, antennas, cluster_size)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GeometryConfig, lane_width, road_length, rsu_offset, rsu_height)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TimingConfig, long_slot, short_slot, short_per_long, long_steps, episodes,
                                   eval_episodes, max_substep)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(VehicleConfig, length, lag, time_gap, standstill, u_max, alpha_max, accel_min,
                                   accel_max, speed_min, speed_max, react_time, init_speed_min, init_speed_max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(HdvConfig, desired_speed_min, desired_speed_max, max_accel, comfort_decel, min_gap,
                                   time_headway, accel_noise)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SensingConfig, rcs, matched_gain, rho, rho_tilde)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ThresholdConfig, neighbor_gap, voi, voi_short, ttc_cap, speed_epsilon)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(VoiConfig, enabled, samples, interval, max_sources, min_rows, log_rows)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MarlConfig, hidden, actor_lr, critic_lr, gamma_long, gamma_short, tau, batch,
                                   long_capacity, short_capacity, warmup_batches, update_every, long_updates,
                                   replay_interval, replay_updates, noise_start, noise_end, centralized_critic,
                                   grad_clip, cav_reward_scale, rsu_reward_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PolicyConfig, learned_cav, learned_rsu, assist, assist_gap_gain, assist_speed_gain,
                                   cruise_speed, cruise_gain, steer_share, lane_gain, heading_gain, rsu_steer_max,
                                   rsu_power_spread)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OutputConfig, checkpoint_every, timeseries)

// radio carries derived watt fields that never appear in files
void to_json(json& j, const RadioConfig& r) {
  j = json{{"power_dbm", r.power_dbm},       {"noise_dbm", r.noise_dbm},       {"carrier_hz", r.carrier_hz},
           {"gain_ref", r.gain_ref},         {"bandwidth_hz", r.bandwidth_hz}, {"light_speed", r.light_speed},
           {"min_rate", r.min_rate}};
}
void from_json(const json& j, RadioConfig& r) {
  j.at("power_dbm").get_to(r.power_dbm);
  j.at("noise_dbm").get_to(r.noise_dbm);
  j.at("carrier_hz").get_to(r.carrier_hz);
  j.at("gain_ref").get_to(r.gain_ref);
  j.at("bandwidth_hz").get_to(r.bandwidth_hz);
  j.at("light_speed").get_to(r.light_speed);
  j.at("min_rate").get_to(r.min_rate);
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ScenarioConfig, seed, counts, geometry, timing, vehicle, hdv, radio, sensing,
                                   thresholds, voi, marl, policy, output)

namespace {

enum class Kind { Object, Integer, Number, Boolean, IntArray, Other };

Kind kind_of(const json& j) {
  if (j.is_object()) return Kind::Object;
  if (j.is_number_integer()) return Kind::Integer;
  if (j.is_number()) return Kind::Number;
  if (j.is_boolean()) return Kind::Boolean;
  if (j.is_array()) return Kind::IntArray;
  return Kind::Other;
}

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Object: return "an object";
    case Kind::Integer: return "an integer";
    case Kind::Number: return "a number";
    case Kind::Boolean: return "a boolean";
    case Kind::IntArray: return "an array of integers";
    case Kind::Other: return "a value";
  }
  return "a value";
}

bool compatible(const json& schema, const json& value) {
  switch (kind_of(schema)) {
    case Kind::Object: return value.is_object();
    case Kind::Integer:
      return value.is_number_integer() && (!schema.is_number_unsigned() || value.is_number_unsigned() ||
                                           value.get<std::int64_t>() >= 0);
    case Kind::Number: return value.is_number();
    case Kind::Boolean: return value.is_boolean();
    case Kind::IntArray:
      if (!value.is_array()) return false;
      for (const auto& e : value)
        if (!e.is_number_integer()) return false;
      return true;
    case Kind::Other: return false;
  }
  return false;
}

void check_against(const json& value, const json& schema, const std::string& path) {
  for (auto it = value.begin(); it != value.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!schema.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const json& s = schema.at(it.key());
    if (!compatible(s, it.value()))
      throw ConfigError("config key '" + key + "' must be " + kind_name(kind_of(s)));
    if (s.is_object()) check_against(it.value(), s, key);
  }
}

json parse_override_value(const json& schema, const std::string& key, const std::string& text) {
  auto fail = [&] {
    return ConfigError("override '" + key + "=" + text + "': value must be " + kind_name(kind_of(schema)));
  };
  switch (kind_of(schema)) {
    case Kind::Integer: {
      std::int64_t v = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) throw fail();
      if (schema.is_number_unsigned() && v < 0) throw fail();
      return schema.is_number_unsigned() ? json(static_cast<std::uint64_t>(v)) : json(v);
    }
    case Kind::Number: {
      // strtod honours the C locale only; the process never calls setlocale
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (text.empty() || end != text.c_str() + text.size()) throw fail();
      return json(v);
    }
    case Kind::Boolean:
      if (text == "true") return json(true);
      if (text == "false") return json(false);
      throw fail();
    case Kind::IntArray: {
      json v = json::parse(text, nullptr, false);
      if (v.is_discarded() || !compatible(schema, v)) throw fail();
      return v;
    }
    default: throw ConfigError("override '" + key + "' does not name a leaf value");
  }
}

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not of the form key=value");
  const std::string key = spec.substr(0, eq);
  const std::string text = spec.substr(eq + 1);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = parse_override_value(*node, key, text);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

std::string default_config_json() { return json(ScenarioConfig{}).dump(2); }

void validate(const ScenarioConfig& c) {
  const auto& n = c.counts;
  require(n.cavs >= 1 && n.rsus >= 1 && n.lanes >= 1 && n.subcarriers >= 1 && n.antennas >= 1,
          "counts.cavs, rsus, lanes, subcarriers and antennas must be at least 1");
  require(n.hdvs >= 0, "counts.hdvs must be non-negative");
  require(n.cluster_size >= 1 && n.cluster_size <= n.rsus, "counts.cluster_size must lie in [1, rsus]");
  const auto& g = c.geometry;
  require(g.lane_width > 0 && g.road_length > 0 && g.rsu_height >= 0, "geometry lengths must be positive");
  const auto& t = c.timing;
  require(t.long_slot > 0 && t.short_slot > 0 && t.short_per_long >= 1 && t.long_steps >= 1,
          "timing slots and step counts must be positive");
  require(t.short_slot * t.short_per_long <= t.long_slot * (1.0 + 1e-9),
          "timing.short_slot * timing.short_per_long must not exceed timing.long_slot");
  require(t.episodes >= 1 && t.eval_episodes >= 0, "timing.episodes must be at least 1");
  require(t.max_substep > 0, "timing.max_substep must be positive");
  const auto& v = c.vehicle;
  require(v.length > 0 && v.lag > 0 && v.time_gap >= 0 && v.standstill >= 0, "vehicle length and lag must be positive");
  require(v.u_max > 0 && v.alpha_max > 0 && v.alpha_max < kPi / 2, "vehicle input bounds must be positive");
  require(v.accel_min < 0 && v.accel_max > 0, "vehicle.accel_min < 0 < vehicle.accel_max required");
  require(v.speed_min >= 0 && v.speed_max > v.speed_min, "vehicle speed bounds are inconsistent");
  require(v.init_speed_min >= v.speed_min && v.init_speed_max <= v.speed_max && v.init_speed_min <= v.init_speed_max,
          "vehicle initial speeds must lie within the speed bounds");
  require(v.react_time >= 0, "vehicle.react_time must be non-negative");
  const auto& h = c.hdv;
  require(h.desired_speed_min > 0 && h.desired_speed_max >= h.desired_speed_min && h.max_accel > 0 &&
              h.comfort_decel > 0 && h.accel_noise >= 0,
          "hdv parameters must be positive");
  const auto& r = c.radio;
  require(r.carrier_hz > 0 && r.gain_ref > 0 && r.bandwidth_hz > 0 && r.light_speed > 0 && r.min_rate >= 0,
          "radio parameters must be positive");
  const auto& s = c.sensing;
  require(s.rcs > 0 && s.matched_gain > 0 && s.rho > 0 && s.rho_tilde > 0, "sensing constants must be positive");
  const auto& th = c.thresholds;
  require(th.neighbor_gap > 0 && th.ttc_cap > 0 && th.speed_epsilon > 0, "thresholds must be positive");
  require(std::isfinite(th.voi), "thresholds.voi must be finite");
  const auto& q = c.voi;
  require(q.samples >= 100, "voi.samples must be at least 100");
  require(q.interval >= 1 && q.max_sources >= 0 && q.min_rows >= 10 && q.log_rows >= q.min_rows,
          "voi schedule is inconsistent");
  const auto& m = c.marl;
  require(!m.hidden.empty(), "marl.hidden needs at least one layer");
  for (int w : m.hidden) require(w >= 1, "marl.hidden widths must be positive");
  require(m.actor_lr > 0 && m.critic_lr > 0, "learning rates must be positive");
  require(m.gamma_long >= 0 && m.gamma_long < 1 && m.gamma_short >= 0 && m.gamma_short < 1,
          "discount factors must lie in [0, 1)");
  require(m.tau > 0 && m.tau < 1, "marl.tau must lie in (0, 1)");
  require(m.batch >= 1 && m.long_capacity >= 1 && m.short_capacity >= 1 && m.warmup_batches >= 0 &&
              m.update_every >= 1 && m.long_updates >= 0 && m.replay_interval >= 0 && m.replay_updates >= 0,
          "marl schedule values are out of range");
  require(m.noise_start >= 0 && m.noise_end >= 0, "exploration noise must be non-negative");
  const auto& p = c.policy;
  require(p.steer_share >= 0 && p.steer_share <= 1, "policy.steer_share must lie in [0, 1]");
  require(p.rsu_steer_max >= 0 && p.rsu_power_spread >= 0 && p.cruise_speed > 0, "policy values are out of range");
  require(c.output.checkpoint_every >= 0, "output.checkpoint_every must be non-negative");
}

ScenarioConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  const json schema = json(ScenarioConfig{});
  json user = json::parse(text, nullptr, false, true);
  if (user.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  check_against(user, schema, "");
  json doc = schema;
  doc.merge_patch(user);
  for (const auto& o : overrides) apply_override(doc, o);

  ScenarioConfig cfg = doc.get<ScenarioConfig>();
  validate(cfg);
  cfg.radio.power_w = dbm_to_watt(cfg.radio.power_dbm);
  cfg.radio.noise_w = dbm_to_watt(cfg.radio.noise_dbm);
  return cfg;
}

ScenarioConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string to_json(const ScenarioConfig& config) { return json(config).dump(2) + "\n"; }

}  // namespace isac
