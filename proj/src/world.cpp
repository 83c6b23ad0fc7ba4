#include "isac/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace isac::sim {

Real ring_ahead(Real x_from, Real x_to, Real road_length) {
  Real d = std::fmod(x_to - x_from, road_length);
  if (d < 0.0) d += road_length;
  return d;
}

std::optional<int> leader_of(const World& w, int id) {
  const auto& self = w.vehicles.at(static_cast<std::size_t>(id));
  std::optional<int> best;
  Real best_d = kInf;
  for (const auto& o : w.vehicles) {
    if (o.id == id || o.lane != self.lane) continue;
    Real d = ring_ahead(self.x, o.x, w.road_length);
    if (d == 0.0 && o.id < id) d = w.road_length;  // co-located: lower id counts as behind
    if (d < best_d || (d == best_d && best && o.id < *best)) {
      best_d = d;
      best = o.id;
    }
  }
  return best;
}

traffic::VehicleState unwrapped(const traffic::VehicleState& follower, traffic::VehicleState leader,
                                Real road_length) {
  leader.x = follower.x + ring_ahead(follower.x, leader.x, road_length);
  return leader;
}

World build_world(const ScenarioConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  World w;
  w.lanes = {cfg.counts.lanes, cfg.geometry.lane_width};
  w.limits = {cfg.vehicle.u_max,     cfg.vehicle.alpha_max, cfg.vehicle.accel_min,
              cfg.vehicle.accel_max, cfg.vehicle.speed_min, cfg.vehicle.speed_max};
  w.road_length = cfg.geometry.road_length;
  w.cavs = cfg.counts.cavs;
  w.hdvs = cfg.counts.hdvs;
  const int n = w.cavs + w.hdvs;
  const int lanes = cfg.counts.lanes;

  // deal a shuffled id order round-robin into lanes
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> per_lane(static_cast<std::size_t>(lanes));
  for (int i = 0; i < n; ++i) per_lane[static_cast<std::size_t>(i % lanes)].push_back(order[static_cast<std::size_t>(i)]);

  const Real len = cfg.vehicle.length;
  const Real min_gap = cfg.vehicle.standstill;
  for (const auto& ids : per_lane) {
    const Real need = static_cast<Real>(ids.size()) * (len + min_gap);
    if (need > w.road_length)
      throw InfeasibleScenario("build_world: " + std::to_string(ids.size()) + " vehicles need " + std::to_string(need) +
                               " m of lane but the road is " + std::to_string(w.road_length) + " m");
  }

  w.vehicles.resize(static_cast<std::size_t>(n));
  w.idm.resize(static_cast<std::size_t>(n));
  std::uniform_real_distribution<Real> weight(0.5, 1.5);
  std::uniform_real_distribution<Real> speed(cfg.vehicle.init_speed_min, cfg.vehicle.init_speed_max);
  std::uniform_real_distribution<Real> desired(cfg.hdv.desired_speed_min, cfg.hdv.desired_speed_max);
  std::uniform_real_distribution<Real> phase(0.0, w.road_length);
  for (int l = 0; l < lanes; ++l) {
    const auto& ids = per_lane[static_cast<std::size_t>(l)];
    if (ids.empty()) continue;
    const Real slack = w.road_length - static_cast<Real>(ids.size()) * (len + min_gap);
    std::vector<Real> wts(ids.size());
    for (auto& x : wts) x = weight(rng);
    const Real total = std::accumulate(wts.begin(), wts.end(), 0.0);
    Real x = phase(rng);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto& v = w.vehicles[static_cast<std::size_t>(ids[i])];
      v.id = ids[i];
      v.kind = v.id < w.cavs ? traffic::VehicleKind::Cav : traffic::VehicleKind::Hdv;
      v.lane = l + 1;
      v.x = std::fmod(x, w.road_length);
      v.y = w.lanes.center(l + 1);
      v.length = len;
      v.lag = cfg.vehicle.lag;
      v.time_gap = cfg.vehicle.time_gap;
      x += len + min_gap + slack * wts[i] / total;
    }
  }
  for (auto& v : w.vehicles) {
    v.speed = speed(rng);
    auto& p = w.idm[static_cast<std::size_t>(v.id)];
    p.max_accel = cfg.hdv.max_accel;
    p.comfort_decel = cfg.hdv.comfort_decel;
    p.min_gap = cfg.hdv.min_gap;
    p.time_headway = cfg.hdv.time_headway;
    p.desired_speed = desired(rng);
  }

  for (int r = 0; r < cfg.counts.rsus; ++r) {
    radio::RsuConfig rsu;
    rsu.id = r;
    rsu.x = (r + 0.5) * w.road_length / cfg.counts.rsus;
    rsu.y = -cfg.geometry.rsu_offset;
    rsu.height = cfg.geometry.rsu_height;
    rsu.antennas = cfg.counts.antennas;
    rsu.max_power_w = cfg.radio.power_w > 0.0 ? cfg.radio.power_w : dbm_to_watt(cfg.radio.power_dbm);
    w.rsus.push_back(rsu);
  }
  return w;
}

}  // namespace isac::sim
