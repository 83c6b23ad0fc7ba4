#include "isac/simulator.hpp"

#include "isac/checkpoint.hpp"
#include "isac/csv.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace isac::sim {

namespace {

constexpr Real kPowerTolerance = 1e-9;

Real signed_ring(Real from, Real to, Real length) {
  Real d = ring_ahead(from, to, length);
  if (d > 0.5 * length) d -= length;
  return d;
}

Real wrap_position(Real x, Real length) {
  x = std::fmod(x, length);
  if (x < 0.0) x += length;
  return x;
}

}  // namespace

Real cav_reward(std::span<const Real> ttc_trace, Real cap, Real scale) {
  if (ttc_trace.empty()) throw InvalidInput("cav_reward: empty TTC trace");
  Real s = 0.0;
  for (Real t : ttc_trace) {
    if (std::isnan(t) || t < 0.0) throw InvalidInput("cav_reward: invalid TTC");
    s += std::min(t, cap);
  }
  return scale * s / static_cast<Real>(ttc_trace.size());
}

Real rsu_reward(std::span<const std::pair<Real, Real>> crbs, Real scale) {
  if (crbs.empty()) return 0.0;
  Real s = 0.0;
  for (const auto& [d, a] : crbs) {
    if (!(d + a > 0.0)) throw InvalidInput("rsu_reward: bounds must be positive");
    s += std::log10(d + a);
  }
  return -scale * s / static_cast<Real>(crbs.size());
}

IsacEnv::IsacEnv(const ScenarioConfig& config, std::uint64_t seed) : cfg_(config), seed_(seed) {
  cfg_.radio.power_w = dbm_to_watt(cfg_.radio.power_dbm);
  cfg_.radio.noise_w = dbm_to_watt(cfg_.radio.noise_dbm);
  validate(cfg_);
  const auto& c = cfg_.counts;
  capacity_ = std::min(c.antennas, c.subcarriers);
  if (capacity_ * c.rsus < c.cavs + c.hdvs)
    throw OverloadError(std::to_string(c.cavs + c.hdvs) + " vehicles exceed the service capacity of " +
                        std::to_string(c.rsus) + " RSUs with " + std::to_string(capacity_) + " beams each");

  echo_.rcs = cfg_.sensing.rcs;
  echo_.array_gain = c.antennas;
  echo_.matched_gain = cfg_.sensing.matched_gain;
  echo_.noise_var = cfg_.radio.noise_w;
  echo_.filtered_noise_var = cfg_.sensing.rho * cfg_.sensing.rho * cfg_.radio.noise_w;
  echo_.rho = cfg_.sensing.rho;
  echo_.rho_tilde = cfg_.sensing.rho_tilde;
  echo_.light_speed = cfg_.radio.light_speed;
  channel_.gain_ref = cfg_.radio.gain_ref;
  channel_.carrier_hz = cfg_.radio.carrier_hz;
  channel_.light_speed = cfg_.radio.light_speed;

  const auto v = static_cast<std::size_t>(c.cavs);
  sel_long_.assign(v, {});
  sel_short_.assign(v, {});
  log_long_.assign(v, {});
  log_short_.assign(v, {});
  reset(0, true);
}

std::size_t IsacEnv::agent_count() const {
  return static_cast<std::size_t>(cfg_.counts.cavs + cfg_.counts.rsus);
}

bool IsacEnv::acts(std::size_t agent, Timescale t) const {
  if (agent >= agent_count()) throw InvalidInput("unknown agent " + std::to_string(agent));
  if (static_cast<int>(agent) < cfg_.counts.cavs)
    return cfg_.policy.learned_cav && (t == Timescale::Long || cfg_.counts.hdvs > 0);
  return t == Timescale::Short && cfg_.policy.learned_rsu;
}

Index IsacEnv::observation_dim(std::size_t agent, Timescale t) const {
  if (static_cast<int>(agent) >= cfg_.counts.cavs) return 5 * capacity_;
  const Index aug = slots() * (kFieldCount + 1);
  if (t == Timescale::Long) return kFieldCount + 2 + 4 + aug;
  return kFieldCount + 4 * cfg_.counts.hdvs + aug;
}

Index IsacEnv::action_dim(std::size_t agent, Timescale t) const {
  if (static_cast<int>(agent) >= cfg_.counts.cavs) return 2 * capacity_;
  return t == Timescale::Long ? 2 : cfg_.counts.hdvs;
}

Vector IsacEnv::action_high(std::size_t agent, Timescale t) const {
  if (static_cast<int>(agent) < cfg_.counts.cavs && t == Timescale::Long)
    return Vector{{cfg_.vehicle.u_max, cfg_.vehicle.alpha_max}};
  return Vector::Ones(action_dim(agent, t));
}

Vector IsacEnv::action_low(std::size_t agent, Timescale t) const { return -action_high(agent, t); }

Index IsacEnv::context_dim() const { return cfg_.marl.centralized_critic ? kFieldCount * cfg_.counts.cavs : 0; }

std::string IsacEnv::agent_name(std::size_t agent) const {
  const int a = static_cast<int>(agent);
  return a < cfg_.counts.cavs ? "cav" + std::to_string(a) : "rsu" + std::to_string(a - cfg_.counts.cavs);
}

void IsacEnv::reset(int episode, bool training) {
  training_ = training;
  episode_ = episode;
  const std::uint64_t es =
      derive_seed(seed_, (training ? 0x10000ULL : 0xE0000ULL) + static_cast<std::uint64_t>(episode));
  world_ = build_world(cfg_, es);
  sense_rng_.seed(derive_seed(es, 1));
  hdv_rng_.seed(derive_seed(es, 2));

  const auto V = static_cast<std::size_t>(cfg_.counts.cavs);
  const auto H = static_cast<std::size_t>(cfg_.counts.hdvs);
  const auto N = V + H;
  slot_ = 0;
  long_step_ = 0;
  views_.assign(V, std::vector<HdvView>(H));
  long_action_.assign(V, Vector::Zero(2));
  applied_sum_.assign(N, {0.0, 0.0});
  applied_u_.assign(N, 0.0);
  slot_ttc_.assign(V, cfg_.thresholds.ttc_cap);
  long_ttcs_.assign(V, {});
  exo_long_.assign(V, {});
  exo_short_.assign(V, {});
  last_request_.assign(V, Vector::Zero(static_cast<Index>(H)));
  last_rate_ok_.assign(V, 0);
  long_snaps_.clear();
  long_preds_.clear();
  snapshot_short_.resize(0, 0);
  pred_short_.assign(V, -1);

  cur_ = EpisodeMetrics{};
  cur_.episode = episode;
  cur_.training = training;
  ttc_sum_ = spacing_sq_ = velocity_sq_ = crb_d_sum_ = crb_a_sum_ = 0.0;
  spacing_n_ = rate_checks_ = rate_ok_ = 0;
  cav_reward_sum_ = rsu_reward_sum_ = 0.0;
  cav_reward_n_ = rsu_reward_n_ = 0;
  assign_service();
}

void IsacEnv::assign_service() {
  const auto R = world_.rsus.size();
  const int N = world_.vehicle_count();
  const int cl = cfg_.counts.cluster_size;
  for (auto& r : world_.rsus) r.served.clear();
  snap_ = radio::RadioSnapshot{};
  snap_.subcarriers = cfg_.counts.subcarriers;
  snap_.channels.assign(R, {});
  snap_.beams.assign(R, {});
  links_.assign(R, std::vector<radio::LinkGeometry>(static_cast<std::size_t>(N)));

  for (std::size_t r = 0; r < R; ++r) {
    for (int v = 0; v < N; ++v) {
      const auto& s = world_.vehicles[static_cast<std::size_t>(v)];
      links_[r][static_cast<std::size_t>(v)] = radio::link_geometry(
          world_.rsus[r], s.x, s.y, s.speed * std::cos(s.heading), s.speed * std::sin(s.heading));
      snap_.channels[r][v] = radio::effective_channel(world_.rsus[r], links_[r][static_cast<std::size_t>(v)], channel_);
    }
  }

  // RSUs by distance for each target
  std::vector<std::vector<std::size_t>> order(static_cast<std::size_t>(N));
  for (int v = 0; v < N; ++v) {
    auto& o = order[static_cast<std::size_t>(v)];
    o.resize(R);
    std::iota(o.begin(), o.end(), std::size_t{0});
    std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
      return links_[a][static_cast<std::size_t>(v)].distance < links_[b][static_cast<std::size_t>(v)].distance;
    });
  }
  auto has_room = [&](std::size_t r) { return static_cast<int>(world_.rsus[r].served.size()) < capacity_; };
  for (int v = 0; v < N; ++v) {
    bool placed = false;
    for (std::size_t r : order[static_cast<std::size_t>(v)]) {
      if (!has_room(r)) continue;
      world_.rsus[r].served.push_back(v);
      snap_.clusters[v].push_back(static_cast<int>(r));
      placed = true;
      break;
    }
    if (!placed) throw OverloadError("no RSU has a free beam for vehicle " + std::to_string(v));
  }
  for (int v = 0; v < N; ++v) {
    auto& members = snap_.clusters[v];
    for (std::size_t r : order[static_cast<std::size_t>(v)]) {
      if (static_cast<int>(members.size()) >= cl) break;
      if (std::find(members.begin(), members.end(), static_cast<int>(r)) != members.end() || !has_room(r)) continue;
      world_.rsus[r].served.push_back(v);
      members.push_back(static_cast<int>(r));
    }
    std::sort(members.begin(), members.end());
  }
  for (auto& r : world_.rsus) {
    std::sort(r.served.begin(), r.served.end());
    snap_.plans.push_back(radio::assign_subcarriers(r, cfg_.counts.subcarriers, cfg_.radio.bandwidth_hz));
  }
}

IsacEnv::Perceived IsacEnv::perceive(int v) const {
  Perceived p;
  const auto lid = leader_of(world_, v);
  if (!lid) return p;
  const auto& self = world_.vehicles[static_cast<std::size_t>(v)];
  p.leader = *lid;
  p.leader_is_hdv = !world_.is_cav(*lid);
  if (!world_.is_cav(v) || !p.leader_is_hdv) {
    const auto lead = unwrapped(self, world_.vehicles[static_cast<std::size_t>(*lid)], world_.road_length);
    p.has_leader = true;
    p.gap = traffic::gap_report(self, lead, cfg_.vehicle.standstill).gap;
    p.leader_speed = lead.speed;
    return p;
  }
  const auto& view = views_[static_cast<std::size_t>(v)][static_cast<std::size_t>(*lid - world_.cavs)];
  if (!view.known) return p;
  // dead-reckon the stale fix forward
  const Real x = view.x + view.speed * view.age * cfg_.timing.short_slot;
  p.has_leader = true;
  p.gap = std::max(signed_ring(self.x, x, world_.road_length) - self.length, 0.0);
  p.leader_speed = view.speed;
  p.age = view.age;
  return p;
}

Vector IsacEnv::fields(int v) const {
  const auto& s = world_.vehicles.at(static_cast<std::size_t>(v));
  const Perceived p = perceive(v);
  Real e = 0.0, ev = 0.0;
  if (p.has_leader) {
    ev = s.speed - p.leader_speed;
    e = p.gap - (cfg_.vehicle.standstill + s.time_gap * ev);
  }
  Vector f(kFieldCount);
  f << std::clamp(e / 20.0, -5.0, 5.0), ev / 5.0, s.speed / 20.0, s.accel / 5.0, s.heading / 0.1,
      (s.y - world_.lanes.center(s.lane)) / world_.lanes.width;
  return f;
}

Matrix IsacEnv::all_fields() const {
  Matrix m(kFieldCount, world_.cavs);
  for (int v = 0; v < world_.cavs; ++v) m.col(v) = fields(v);
  return m;
}

std::vector<int> IsacEnv::cav_predecessors() const {
  std::vector<int> out(static_cast<std::size_t>(world_.cavs), -1);
  for (int v = 0; v < world_.cavs; ++v) {
    const auto l = leader_of(world_, v);
    if (l && world_.is_cav(*l)) out[static_cast<std::size_t>(v)] = *l;
  }
  return out;
}

Vector IsacEnv::augmented(int cav, Timescale t, const Vector& local) const {
  const auto c = static_cast<std::size_t>(cav);
  voi::AugmentSchema schema{local.size(), kFieldCount, t == Timescale::Long ? sel_long_[c] : sel_short_[c], slots()};
  const auto& exo = t == Timescale::Long ? exo_long_[c] : exo_short_[c];
  return voi::augment_state(local, schema, exo);
}

Vector IsacEnv::observe(std::size_t agent, Timescale t) const {
  const int a = static_cast<int>(agent);
  if (agent >= agent_count()) throw InvalidInput("unknown agent " + std::to_string(agent));
  if (a >= world_.cavs) {
    const auto r = static_cast<std::size_t>(a - world_.cavs);
    Vector o = Vector::Zero(5 * capacity_);
    const auto& served = world_.rsus[r].served;
    for (std::size_t j = 0; j < served.size(); ++j) {
      const auto& l = links_[r][static_cast<std::size_t>(served[j])];
      o.segment(static_cast<Index>(5 * j), 5) << 1.0, l.distance / 100.0, std::cos(l.azimuth), std::sin(l.azimuth),
          world_.is_cav(served[j]) ? 0.0 : 1.0;
    }
    return o;
  }

  const auto& s = world_.vehicles[agent];
  const Vector f = fields(a);
  if (t == Timescale::Long) {
    Vector local(kFieldCount + 6);
    local.head(kFieldCount) = f;
    local(kFieldCount) = long_action_[agent](0) / cfg_.vehicle.u_max;
    local(kFieldCount + 1) = long_action_[agent](1) / cfg_.vehicle.alpha_max;
    const Perceived p = perceive(a);
    if (p.leader_is_hdv && p.has_leader)
      local.tail(4) << 1.0, p.gap / 50.0, (s.speed - p.leader_speed) / 10.0, std::min(p.age, 50) / 10.0;
    else
      local.tail(4).setZero();
    return augmented(a, t, local);
  }

  const int H = world_.hdvs;
  Vector local = Vector::Zero(kFieldCount + 4 * H);
  local.head(kFieldCount) = f;
  for (int h = 0; h < H; ++h) {
    const auto& view = views_[agent][static_cast<std::size_t>(h)];
    if (!view.known) continue;
    const Real rel = signed_ring(s.x, view.x, world_.road_length);
    local.segment(kFieldCount + 4 * h, 4) << 1.0, std::clamp(rel / 100.0, -2.0, 2.0),
        world_.lanes.lane_of(view.y) == s.lane ? 1.0 : 0.0, std::min(view.age, 50) / 10.0;
  }
  return augmented(a, t, local);
}

Vector IsacEnv::context(Timescale) const {
  if (!cfg_.marl.centralized_critic) return {};
  return all_fields().reshaped();
}

void IsacEnv::apply_long(std::span<const std::optional<Vector>> actions) {
  if (actions.size() != agent_count()) throw InvalidInput("apply_long: one entry per agent is required");
  for (int v = 0; v < world_.cavs; ++v) {
    const auto& a = actions[static_cast<std::size_t>(v)];
    if (a && a->size() != 2) throw InvalidInput("apply_long: CAV actions have two entries");
    long_action_[static_cast<std::size_t>(v)] = a ? *a : Vector::Zero(2);
  }
  std::fill(applied_sum_.begin(), applied_sum_.end(), std::array<Real, 2>{0.0, 0.0});
  for (auto& t : long_ttcs_) t.clear();
  long_snaps_.push_back(all_fields());
  long_preds_.push_back(cav_predecessors());
}

void IsacEnv::form_beams(std::span<const std::optional<Vector>> actions) {
  const Real pmax = cfg_.radio.power_w;
  for (std::size_t r = 0; r < world_.rsus.size(); ++r) {
    const auto& rsu = world_.rsus[r];
    auto& beams = snap_.beams[r];
    beams.clear();
    const auto n = static_cast<Index>(rsu.served.size());
    if (n == 0) continue;
    const auto& act = actions[static_cast<std::size_t>(world_.cavs) + r];
    if (act && act->size() != 2 * capacity_) throw InvalidInput("RSU action has the wrong size");
    Vector logits = Vector::Zero(n);
    Vector offsets = Vector::Zero(n);
    if (act) {
      offsets = act->head(n) * cfg_.policy.rsu_steer_max;
      logits = act->segment(capacity_, n) * cfg_.policy.rsu_power_spread;
    }
    Vector w = (logits.array() - logits.maxCoeff()).exp();
    w /= w.sum();
    for (Index j = 0; j < n; ++j) {
      const int v = rsu.served[static_cast<std::size_t>(j)];
      const CVector& h = snap_.channels[r].at(v);
      const Real pj = w(j) * pmax;
      if (offsets(j) == 0.0) {
        beams[v] = radio::conjugate_beamformer(h, pj);
      } else {
        const Complex phase = h(0) / std::abs(h(0));
        const Real theta = links_[r][static_cast<std::size_t>(v)].azimuth + offsets(j);
        beams[v] = std::sqrt(pj) * phase * radio::steering_vector(theta, rsu.antennas);
      }
    }
    const Real ratio = radio::transmit_power(snap_, static_cast<int>(r)) / pmax;
    ++cur_.power_audits;
    cur_.max_power_ratio = std::max(cur_.max_power_ratio, ratio);
    if (!(ratio <= 1.0 + kPowerTolerance))
      throw PowerBudgetViolation("RSU " + std::to_string(r) + " transmits " + fmt(ratio) + " times its budget");
  }
}

void IsacEnv::sense_and_relay(std::span<const std::optional<Vector>> actions,
                              std::vector<std::vector<std::pair<Real, Real>>>& rsu_crbs) {
  const int V = world_.cavs;
  const int H = world_.hdvs;
  const std::size_t R = world_.rsus.size();
  std::vector<std::map<int, sensing::SensingMeasurement>> meas(R);
  std::map<int, const sensing::SensingMeasurement*> best;

  for (std::size_t r = 0; r < R; ++r) {
    for (int v : world_.rsus[r].served) {
      try {
        const auto m = sensing::sense_target(links_[r][static_cast<std::size_t>(v)], snap_.beams[r].at(v), echo_,
                                             sense_rng_);
        rsu_crbs[r].emplace_back(m.crb_distance, m.crb_angle);
        meas[r][v] = m;
      } catch (const BeamMisalignment&) {
        ++cur_.misaligned;
      }
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (const auto& [v, m] : meas[r]) {
      auto& b = best[v];
      if (!b || m.var_distance + m.crb_angle < b->var_distance + b->crb_angle) b = &m;
    }
  }
  for (const auto& [v, m] : best) {
    crb_d_sum_ += m->crb_distance;
    crb_a_sum_ += m->crb_angle;
    ++cur_.sensing_samples;
  }

  for (int v = 0; v < V; ++v) {
    const bool ok = radio::sum_rate_ok(snap_, v, cfg_.radio.noise_w, cfg_.radio.min_rate);
    last_rate_ok_[static_cast<std::size_t>(v)] = ok;
    ++rate_checks_;
    rate_ok_ += ok ? 1 : 0;
  }

  for (auto& row : views_)
    for (auto& view : row)
      if (view.known) ++view.age;

  for (int v = 0; v < V && H > 0; ++v) {
    const auto uv = static_cast<std::size_t>(v);
    const auto& act = actions[uv];
    int h = -1;
    if (act) {
      if (act->size() != H) throw InvalidInput("relay request has the wrong size");
      Index arg = 0;
      if (act->maxCoeff(&arg) > 0.0) h = static_cast<int>(arg);
      last_request_[uv] = *act;
    } else {
      h = static_cast<int>((slot_ + uv) % static_cast<std::size_t>(H));
      last_request_[uv] = Vector::Zero(H);
      last_request_[uv](h) = 1.0;
    }
    if (h < 0) continue;
    ++cur_.relay_requests;
    const int target = V + h;
    const auto& tc = snap_.clusters.at(target);
    const auto& vc = snap_.clusters.at(v);
    const sensing::SensingMeasurement* pick = nullptr;
    std::size_t pick_r = 0;
    for (int r : tc) {
      if (std::find(vc.begin(), vc.end(), r) == vc.end()) continue;
      const auto it = meas[static_cast<std::size_t>(r)].find(target);
      if (it == meas[static_cast<std::size_t>(r)].end()) continue;
      if (!pick || it->second.var_distance < pick->var_distance) {
        pick = &it->second;
        pick_r = static_cast<std::size_t>(r);
      }
    }
    if (!pick || !last_rate_ok_[uv]) continue;

    const auto& rsu = world_.rsus[pick_r];
    const Real horizontal = std::sqrt(std::max(pick->distance * pick->distance - rsu.height * rsu.height, 0.0));
    const Real dx = horizontal * std::cos(pick->azimuth);
    auto& view = views_[uv][static_cast<std::size_t>(h)];
    Real speed = view.known ? view.speed : world_.vehicles[uv].speed;
    // radial velocity only resolves the along-road speed away from broadside
    if (std::abs(dx) >= 0.3 * horizontal && horizontal > 0.0)
      speed = std::clamp(pick->radial_velocity * pick->distance / dx, cfg_.vehicle.speed_min, cfg_.vehicle.speed_max);
    view.known = true;
    view.x = wrap_position(rsu.x + dx, world_.road_length);
    view.y = rsu.y + horizontal * std::sin(pick->azimuth);
    view.speed = speed;
    view.age = 0;
    ++cur_.relays_delivered;
  }

  for (int v = 0; v < V; ++v) {
    auto& exo = exo_short_[static_cast<std::size_t>(v)];
    exo.clear();
    if (!last_rate_ok_[static_cast<std::size_t>(v)]) continue;
    for (int s : sel_short_[static_cast<std::size_t>(v)]) exo.emplace_back(s, fields(s));
  }
}

void IsacEnv::move_vehicles() {
  const int N = world_.vehicle_count();
  const auto& lim = world_.limits;
  const auto& pol = cfg_.policy;
  std::vector<traffic::ControlInput> controls(static_cast<std::size_t>(N));
  std::normal_distribution<Real> unit(0.0, 1.0);

  for (int v = 0; v < N; ++v) {
    const auto uv = static_cast<std::size_t>(v);
    const auto& s = world_.vehicles[uv];
    const Real lateral = s.y - world_.lanes.center(s.lane);
    traffic::ControlInput c;
    c.steering = -pol.lane_gain * lateral - pol.heading_gain * s.heading;
    const auto lid = leader_of(world_, v);
    std::optional<traffic::VehicleState> lead;
    if (lid) lead = unwrapped(s, world_.vehicles[static_cast<std::size_t>(*lid)], world_.road_length);

    if (world_.is_cav(v)) {
      const Perceived p = perceive(v);
      Real assist = 0.0;
      if (pol.assist) {
        assist = pol.cruise_gain * (pol.cruise_speed - s.speed);
        if (p.has_leader) {
          const Real follow = pol.assist_gap_gain * (p.gap - cfg_.vehicle.standstill - s.time_gap * s.speed) -
                              pol.assist_speed_gain * (s.speed - p.leader_speed);
          assist = std::min(assist, follow);
        }
      }
      c.accel_cmd = assist + long_action_[uv](0);
      c.steering += pol.steer_share * long_action_[uv](1);
    } else {
      c.accel_cmd = traffic::hdv_accel(s, lead ? &*lead : nullptr, world_.idm[uv], lim) +
                    cfg_.hdv.accel_noise * unit(hdv_rng_);
    }

    std::optional<traffic::GapReport> gap;
    if (lead) gap = traffic::gap_report(s, *lead, cfg_.vehicle.standstill);
    const auto check = traffic::enforce_constraints(s, c, lim, gap);
    if (world_.is_cav(v)) cur_.constraint_violations += check.violations.size();
    controls[uv] = check.control;
    applied_u_[uv] = check.control.accel_cmd;
    applied_sum_[uv][0] += check.control.accel_cmd / lim.u_max;
    applied_sum_[uv][1] += check.control.steering / lim.alpha_max;
  }

  for (int v = 0; v < N; ++v) {
    const auto uv = static_cast<std::size_t>(v);
    auto next = traffic::advance_vehicle(world_.vehicles[uv], controls[uv], cfg_.timing.short_slot,
                                         cfg_.timing.max_substep, lim);
    next.x = wrap_position(next.x, world_.road_length);
    next.lane = std::clamp(world_.lanes.lane_of(next.y), 1, world_.lanes.count);
    world_.vehicles[uv] = next;
  }

  const Real cap = cfg_.thresholds.ttc_cap;
  const Real now = static_cast<Real>(slot_ + 1) * cfg_.timing.short_slot;
  for (int v = 0; v < N; ++v) {
    const auto uv = static_cast<std::size_t>(v);
    const auto& s = world_.vehicles[uv];
    const auto lid = leader_of(world_, v);
    TimeseriesRow row{episode_, now, v, world_.is_cav(v), 0.0, 0.0, s.accel, applied_u_[uv], kInf, 0};
    if (lid) {
      const auto lead = unwrapped(s, world_.vehicles[static_cast<std::size_t>(*lid)], world_.road_length);
      const auto g = traffic::gap_report(s, lead, cfg_.vehicle.standstill);
      const Real t = traffic::ttc(s, lead, g.gap, cfg_.thresholds.speed_epsilon);
      const auto rec = traffic::cr_flag(t, s.speed, s.accel, cfg_.vehicle.react_time, lim.brake_max());
      ++cur_.pair_samples;
      cur_.cr_events += static_cast<std::size_t>(rec.cr_flag);
      ttc_sum_ += std::min(t, cap);
      cur_.min_ttc = std::min(cur_.min_ttc, t);
      if (g.overlap) ++cur_.collisions;
      if (world_.is_cav(v)) {
        spacing_sq_ += g.spacing_error * g.spacing_error;
        velocity_sq_ += g.velocity_error * g.velocity_error;
        ++spacing_n_;
        slot_ttc_[uv] = t;
      }
      row.spacing_error = g.spacing_error;
      row.velocity_error = g.velocity_error;
      row.ttc = t;
      row.cr_flag = rec.cr_flag;
    } else if (world_.is_cav(v)) {
      slot_ttc_[uv] = cap;
    }
    if (record_ts_) timeseries_.push_back(row);
  }
}

void IsacEnv::push_row(std::deque<VoiRow>& log, VoiRow row) {
  log.push_back(std::move(row));
  while (log.size() > static_cast<std::size_t>(cfg_.voi.log_rows)) log.pop_front();
}

std::vector<Real> IsacEnv::apply_short(std::span<const std::optional<Vector>> actions) {
  if (actions.size() != agent_count()) throw InvalidInput("apply_short: one entry per agent is required");
  if (long_snaps_.empty()) throw InvalidInput("apply_short: no long-term action is in force");
  const std::size_t R = world_.rsus.size();
  const auto V = static_cast<std::size_t>(world_.cavs);

  form_beams(actions);
  std::vector<std::vector<std::pair<Real, Real>>> crbs(R);
  sense_and_relay(actions, crbs);

  // predecessor's request at t against everyone's fields at t-1
  if (world_.hdvs > 0) {
    for (std::size_t v = 0; v < V; ++v) {
      const int p = pred_short_[v];
      if (p >= 0 && snapshot_short_.size() > 0) push_row(log_short_[v], {last_request_[static_cast<std::size_t>(p)], snapshot_short_});
    }
    snapshot_short_ = all_fields();
    pred_short_ = cav_predecessors();
  }

  move_vehicles();

  std::vector<Real> rewards(agent_count(), 0.0);
  Real mean = 0.0;
  const Real cap = cfg_.thresholds.ttc_cap;
  for (std::size_t v = 0; v < V; ++v) {
    rewards[v] = cav_reward(std::span<const Real>(&slot_ttc_[v], 1), cap, cfg_.marl.cav_reward_scale);
    long_ttcs_[v].push_back(slot_ttc_[v]);
    cav_reward_sum_ += rewards[v];
    ++cav_reward_n_;
  }
  for (std::size_t r = 0; r < R; ++r) {
    const Real rr = rsu_reward(crbs[r], cfg_.marl.rsu_reward_scale);
    rewards[V + r] = rr;
    rsu_reward_sum_ += rr;
    ++rsu_reward_n_;
  }
  for (Real r : rewards) mean += r;
  mean /= static_cast<Real>(rewards.size());
  slot_log_.push_back({episode_, long_step_, static_cast<int>(slot_ % static_cast<std::size_t>(cfg_.timing.short_per_long)),
                       Timescale::Short, -1, mean});

  ++cur_.short_slots;
  ++slot_;
  assign_service();
  return rewards;
}

std::vector<Real> IsacEnv::long_rewards() {
  const auto V = static_cast<std::size_t>(world_.cavs);
  const Real T = cfg_.timing.short_per_long;
  const std::size_t tau = long_snaps_.size() - 1;

  // mean applied control of the predecessor over slot tau against fields at the start of tau-1
  if (tau >= 1) {
    const auto& preds = long_preds_[tau - 1];
    for (std::size_t v = 0; v < V; ++v) {
      const int p = preds[v];
      if (p < 0) continue;
      const auto& a = applied_sum_[static_cast<std::size_t>(p)];
      push_row(log_long_[v], {Vector{{a[0] / T, a[1] / T}}, long_snaps_[tau - 1]});
    }
  }

  for (std::size_t v = 0; v < V; ++v) {
    auto& exo = exo_long_[v];
    exo.clear();
    if (!last_rate_ok_[v]) continue;
    for (int s : sel_long_[v]) exo.emplace_back(s, fields(s));
  }

  std::vector<Real> rewards(agent_count(), 0.0);
  for (std::size_t v = 0; v < V; ++v) {
    rewards[v] = cav_reward(long_ttcs_[v], cfg_.thresholds.ttc_cap, cfg_.marl.cav_reward_scale);
    if (acts(v, Timescale::Long))
      slot_log_.push_back({episode_, long_step_, -1, Timescale::Long, static_cast<int>(v), rewards[v]});
  }
  ++cur_.long_slots;
  ++long_step_;
  return rewards;
}

void IsacEnv::end_episode() {
  EpisodeMetrics m = cur_;
  const Real cap = cfg_.thresholds.ttc_cap;
  m.mean_ttc = m.pair_samples ? ttc_sum_ / static_cast<Real>(m.pair_samples) : cap;
  m.cr_ratio = m.pair_samples ? static_cast<Real>(m.cr_events) / static_cast<Real>(m.pair_samples) : 0.0;
  if (spacing_n_) {
    m.spacing_rms = std::sqrt(spacing_sq_ / static_cast<Real>(spacing_n_));
    m.velocity_rms = std::sqrt(velocity_sq_ / static_cast<Real>(spacing_n_));
  }
  if (m.sensing_samples) {
    m.crb_distance = crb_d_sum_ / static_cast<Real>(m.sensing_samples);
    m.crb_angle = crb_a_sum_ / static_cast<Real>(m.sensing_samples);
    m.mean_crb = m.crb_distance + m.crb_angle;
  }
  m.rate_ok_fraction = rate_checks_ ? static_cast<Real>(rate_ok_) / static_cast<Real>(rate_checks_) : 0.0;
  Real sel = 0.0;
  for (const auto& s : sel_long_) sel += static_cast<Real>(s.size());
  m.voi_selected = world_.cavs ? sel / world_.cavs : 0.0;
  m.cav_reward = cav_reward_n_ ? cav_reward_sum_ / static_cast<Real>(cav_reward_n_) : 0.0;
  m.rsu_reward = rsu_reward_n_ ? rsu_reward_sum_ / static_cast<Real>(rsu_reward_n_) : 0.0;
  last_metrics_ = m;
}

const std::vector<int>& IsacEnv::selection(int cav, Timescale t) const {
  const auto c = static_cast<std::size_t>(cav);
  if (cav < 0 || c >= sel_long_.size()) throw InvalidInput("selection: unknown CAV " + std::to_string(cav));
  return t == Timescale::Long ? sel_long_[c] : sel_short_[c];
}

void IsacEnv::set_selection(int cav, Timescale t, std::vector<int> sources) {
  const auto c = static_cast<std::size_t>(cav);
  if (cav < 0 || c >= sel_long_.size()) throw InvalidInput("set_selection: unknown CAV " + std::to_string(cav));
  if (static_cast<Index>(sources.size()) > slots())
    throw InvalidInput("set_selection: more sources than augmented-state slots");
  for (int s : sources)
    if (s < 0 || s >= cfg_.counts.cavs || s == cav) throw InvalidInput("set_selection: invalid source " + std::to_string(s));
  std::sort(sources.begin(), sources.end());
  (t == Timescale::Long ? sel_long_[c] : sel_short_[c]) = std::move(sources);
}

std::size_t IsacEnv::voi_rows(int cav, Timescale t) const {
  const auto c = static_cast<std::size_t>(cav);
  return t == Timescale::Long ? log_long_.at(c).size() : log_short_.at(c).size();
}

Real IsacEnv::threshold(Timescale t) const {
  if (t == Timescale::Short && cfg_.thresholds.voi_short >= 0.0) return cfg_.thresholds.voi_short;
  return cfg_.thresholds.voi;
}

std::vector<voi::VoIRecord> IsacEnv::reselect(Rng& rng) {
  std::vector<voi::VoIRecord> out;
  if (!cfg_.voi.enabled) return out;
  const int V = cfg_.counts.cavs;
  const auto min_rows = std::max<std::size_t>(static_cast<std::size_t>(cfg_.voi.min_rows), voi::kMinLogRows);
  for (int v = 0; v < V; ++v) {
    for (Timescale t : {Timescale::Long, Timescale::Short}) {
      const auto& log = t == Timescale::Long ? log_long_[static_cast<std::size_t>(v)] : log_short_[static_cast<std::size_t>(v)];
      if (log.size() < min_rows) continue;
      std::vector<voi::VoIRecord> recs;
      for (int s = 0; s < V; ++s) {
        if (s == v) continue;
        std::vector<voi::TransitionRow> rows;
        rows.reserve(log.size());
        for (const auto& r : log) rows.push_back({r.action, r.fields.col(v), r.fields.col(s)});
        auto rec = voi::estimate_from_log(rows, static_cast<std::size_t>(cfg_.voi.samples), rng);
        rec.vehicle = v;
        rec.source = s;
        rec.timescale = t;
        recs.push_back(rec);
      }
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < recs.size(); ++i)
        if (recs[i].kl >= threshold(t)) idx.push_back(i);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return recs[a].kl > recs[b].kl; });
      if (static_cast<Index>(idx.size()) > slots()) idx.resize(static_cast<std::size_t>(slots()));
      std::vector<int> chosen;
      for (std::size_t i : idx) {
        recs[i].selected = true;
        chosen.push_back(recs[i].source);
      }
      set_selection(v, t, chosen);
      out.insert(out.end(), recs.begin(), recs.end());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

std::vector<marl::AgentBundle> make_agents(const IsacEnv& env, std::uint64_t seed) {
  const auto& m = env.config().marl;
  std::vector<Index> hidden(m.hidden.begin(), m.hidden.end());
  std::vector<marl::AgentBundle> out;
  for (std::size_t i = 0; i < env.agent_count(); ++i) {
    marl::AgentBundle b;
    b.name = env.agent_name(i);
    for (Timescale t : {Timescale::Long, Timescale::Short}) {
      if (!env.acts(i, t)) continue;
      marl::AgentConfig c;
      c.obs_dim = env.observation_dim(i, t);
      c.extra_dim = env.context_dim();
      c.action_dim = env.action_dim(i, t);
      c.action_low = env.action_low(i, t);
      c.action_high = env.action_high(i, t);
      c.hidden = hidden;
      c.actor_lr = m.actor_lr;
      c.critic_lr = m.critic_lr;
      c.gamma = t == Timescale::Long ? m.gamma_long : m.gamma_short;
      c.tau = m.tau;
      c.capacity = static_cast<std::size_t>(t == Timescale::Long ? m.long_capacity : m.short_capacity);
      c.batch = static_cast<std::size_t>(m.batch);
      c.grad_clip = m.grad_clip;
      c.timescale = t;
      const std::uint64_t s = derive_seed(seed, 0xA000 + 2 * i + (t == Timescale::Short ? 1 : 0));
      (t == Timescale::Long ? b.long_agent : b.short_agent).emplace(b.name, c, s);
    }
    out.push_back(std::move(b));
  }
  return out;
}

marl::Schedule make_schedule(const ScenarioConfig& cfg, bool learn, int episodes) {
  marl::Schedule s;
  s.episodes = episodes;
  s.learn = learn;
  s.noise_start = cfg.marl.noise_start;
  s.noise_end = cfg.marl.noise_end;
  s.noise_decay_episodes = cfg.timing.episodes;
  s.warmup_long = s.warmup_short = static_cast<std::size_t>(cfg.marl.warmup_batches * cfg.marl.batch);
  s.update_every = cfg.marl.update_every;
  s.long_updates = cfg.marl.long_updates;
  s.replay_interval = cfg.marl.replay_interval;
  s.replay_updates = cfg.marl.replay_updates;
  return s;
}

Real mean_of(const std::vector<EpisodeMetrics>& ms, Real EpisodeMetrics::*field) {
  if (ms.empty()) throw InvalidInput("mean_of: no episodes");
  Real s = 0.0;
  for (const auto& m : ms) s += m.*field;
  return s / static_cast<Real>(ms.size());
}

namespace {

namespace fs = std::filesystem;

const std::initializer_list<const char*> kMetricsHeader = {
    "episode",         "mean_ttc",       "min_ttc",          "cr_ratio",       "cr_events",
    "pair_samples",    "spacing_rms",    "velocity_rms",     "crb_distance",   "crb_angle",
    "mean_crb",        "sensing_samples", "misaligned",      "rate_ok_fraction", "relay_requests",
    "relays_delivered", "collisions",    "constraint_violations", "voi_selected", "long_slots",
    "short_slots",     "power_audits",   "max_power_ratio",  "cav_reward",     "rsu_reward"};

void write_metrics(const std::string& path, const std::vector<EpisodeMetrics>& ms) {
  CsvWriter w(path, kMetricsHeader);
  for (const auto& m : ms)
    w.row(m.episode, m.mean_ttc, m.min_ttc, m.cr_ratio, m.cr_events, m.pair_samples, m.spacing_rms, m.velocity_rms,
          m.crb_distance, m.crb_angle, m.mean_crb, m.sensing_samples, m.misaligned, m.rate_ok_fraction,
          m.relay_requests, m.relays_delivered, m.collisions, m.constraint_violations, m.voi_selected, m.long_slots,
          m.short_slots, m.power_audits, m.max_power_ratio, m.cav_reward, m.rsu_reward);
}

void write_timeseries(const std::string& path, const std::vector<TimeseriesRow>& rows) {
  CsvWriter w(path, {"episode", "time", "vehicle", "cav", "spacing_error", "velocity_error", "accel", "input_accel",
                     "ttc", "cr_flag"});
  for (const auto& r : rows)
    w.row(r.episode, r.time, r.vehicle, r.cav ? 1 : 0, r.spacing_error, r.velocity_error, r.accel, r.input_accel,
          r.ttc, r.cr_flag);
}

void write_training_log(const std::string& path, const std::vector<marl::EpisodeLog>& logs, const IsacEnv& env,
                        const std::vector<marl::AgentBundle>& bundles) {
  CsvWriter w(path, {"episode", "agent", "timescale", "reward", "critic_loss", "actor_grad_norm", "noise",
                     "learn_steps", "transitions"});
  for (const auto& log : logs) {
    for (std::size_t i = 0; i < log.agents.size(); ++i) {
      const auto& a = log.agents[i];
      for (Timescale t : {Timescale::Long, Timescale::Short}) {
        if (!bundles[i].agent(t)) continue;
        const bool lng = t == Timescale::Long;
        w.row(log.episode, env.agent_name(i), voi::to_string(t), lng ? a.long_reward : a.short_reward, a.critic_loss,
              a.actor_grad_norm, log.noise, a.learn_steps, lng ? a.long_transitions : a.short_transitions);
      }
    }
  }
}

void write_slot_log(const std::string& path, const std::vector<SlotLogRow>& rows) {
  CsvWriter w(path, {"episode", "long_step", "short_step", "timescale", "agent", "reward"});
  for (const auto& r : rows) w.row(r.episode, r.long_step, r.short_step, voi::to_string(r.timescale), r.agent, r.reward);
}

void write_voi(const std::string& path, const std::vector<VoiLogEntry>& entries) {
  CsvWriter w(path, {"episode", "vehicle", "source", "timescale", "kl_bits", "sigma_mc", "selected"});
  for (const auto& e : entries)
    w.row(e.episode, e.record.vehicle, e.record.source, voi::to_string(e.record.timescale), e.record.kl,
          e.record.sigma(), e.record.selected ? 1 : 0);
}

std::vector<marl::SelectionEntry> selections_of(const IsacEnv& env) {
  std::vector<marl::SelectionEntry> out;
  for (int v = 0; v < env.config().counts.cavs; ++v)
    for (Timescale t : {Timescale::Long, Timescale::Short}) out.push_back({v, t, env.selection(v, t)});
  return out;
}

void prepare(const std::string& dir, const ScenarioConfig& cfg) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  std::ofstream(fs::path(dir) / "config.json", std::ios::binary) << to_json(cfg) << '\n';
}

std::string in(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

// Noise-free evaluation episodes on the evaluation world stream.
std::vector<EpisodeMetrics> evaluate(IsacEnv& env, std::vector<marl::AgentBundle>& bundles, Rng& rng,
                                     const ProgressFn& progress) {
  const auto& cfg = env.config();
  auto sch = make_schedule(cfg, false, cfg.timing.eval_episodes);
  sch.training_worlds = false;
  std::vector<EpisodeMetrics> out;
  env.clear_logs();
  env.record_timeseries(cfg.output.timeseries);
  marl::train(env, bundles, sch, rng, 0, [&](const marl::EpisodeLog&) {
    out.push_back(env.metrics());
    if (progress) progress(out.back());
  });
  env.record_timeseries(false);
  return out;
}

void write_eval(const std::string& dir, const IsacEnv& env, const std::vector<EpisodeMetrics>& ms) {
  if (dir.empty()) return;
  write_metrics(in(dir, "eval.csv"), ms);
  if (env.config().output.timeseries) write_timeseries(in(dir, "timeseries.csv"), env.timeseries());
}

}  // namespace

RunResult run_experiment(const ScenarioConfig& config, const std::string& out_dir, const ProgressFn& progress) {
  IsacEnv env(config, config.seed);
  const auto& cfg = env.config();
  auto bundles = make_agents(env, cfg.seed);
  Rng rng(derive_seed(cfg.seed, 0xB000));
  Rng voi_rng(derive_seed(cfg.seed, 0xC000));
  prepare(out_dir, cfg);

  RunResult res;
  const auto sch = make_schedule(cfg, true, 1);
  for (int ep = 0; ep < cfg.timing.episodes; ++ep) {
    auto logs = marl::train(env, bundles, sch, rng, ep);
    res.logs.insert(res.logs.end(), logs.begin(), logs.end());
    res.training.push_back(env.metrics());
    if (progress) progress(res.training.back());
    if (cfg.voi.enabled && (ep + 1) % cfg.voi.interval == 0)
      for (const auto& r : env.reselect(voi_rng)) res.voi.push_back({ep, r});
    const bool last = ep + 1 == cfg.timing.episodes;
    const bool periodic = cfg.output.checkpoint_every > 0 && (ep + 1) % cfg.output.checkpoint_every == 0;
    if (!out_dir.empty() && (last || periodic))
      marl::save_checkpoint(in(out_dir, ("checkpoint-" + std::to_string(ep + 1)).c_str()),
                            marl::capture(bundles, ep + 1, rng, selections_of(env)));
  }
  const std::vector<SlotLogRow> training_slots = env.slot_log();
  if (!out_dir.empty()) {
    write_metrics(in(out_dir, "metrics.csv"), res.training);
    write_training_log(in(out_dir, "training_log.csv"), res.logs, env, bundles);
    write_slot_log(in(out_dir, "transitions.csv"), training_slots);
    write_voi(in(out_dir, "voi.csv"), res.voi);
  }

  res.evaluation = evaluate(env, bundles, rng, progress);
  write_eval(out_dir, env, res.evaluation);
  return res;
}

RunResult run_baseline(const ScenarioConfig& config, const std::string& out_dir, const ProgressFn& progress) {
  ScenarioConfig cfg = config;
  cfg.policy.learned_cav = false;
  cfg.policy.learned_rsu = false;
  IsacEnv env(cfg, cfg.seed);
  auto bundles = make_agents(env, cfg.seed);
  Rng rng(derive_seed(cfg.seed, 0xB000));
  prepare(out_dir, env.config());

  RunResult res;
  const auto sch = make_schedule(env.config(), false, cfg.timing.episodes);
  res.logs = marl::train(env, bundles, sch, rng, 0, [&](const marl::EpisodeLog&) {
    res.training.push_back(env.metrics());
    if (progress) progress(res.training.back());
  });
  if (!out_dir.empty()) {
    write_metrics(in(out_dir, "metrics.csv"), res.training);
    write_slot_log(in(out_dir, "transitions.csv"), env.slot_log());
  }
  res.evaluation = evaluate(env, bundles, rng, progress);
  write_eval(out_dir, env, res.evaluation);
  return res;
}

RunResult run_evaluation(const ScenarioConfig& config, const std::string& checkpoint, const std::string& out_dir,
                         const ProgressFn& progress) {
  IsacEnv env(config, config.seed);
  auto bundles = make_agents(env, config.seed);
  const auto ck = marl::load_checkpoint(checkpoint);
  marl::restore(bundles, ck);
  for (const auto& s : ck.selections) {
    if (s.vehicle < 0 || s.vehicle >= config.counts.cavs)
      throw marl::CheckpointError("checkpoint selection refers to unknown CAV " + std::to_string(s.vehicle));
    env.set_selection(s.vehicle, s.timescale, s.sources);
  }
  Rng rng;
  {
    std::istringstream st(ck.rng_state);
    st >> rng;
    if (!st) throw marl::CheckpointError("checkpoint v1: unreadable rng state");
  }
  prepare(out_dir, env.config());
  RunResult res;
  res.evaluation = evaluate(env, bundles, rng, progress);
  write_eval(out_dir, env, res.evaluation);
  return res;
}

}  // namespace isac::sim
