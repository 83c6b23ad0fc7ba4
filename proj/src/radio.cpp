#include "isac/radio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace isac::radio {

Complex channel_coefficient(Real distance, const ChannelParams& p) {
  if (!(distance > 0.0)) throw InvalidInput("channel_coefficient: distance must be positive");
  const Real cycles = p.carrier_hz / p.light_speed * distance;
  const Real frac = cycles - std::floor(cycles);
  return std::polar(p.gain_ref / distance, 2.0 * kPi * frac);
}

LinkGeometry link_geometry(const RsuConfig& rsu, Real x, Real y, Real vx, Real vy) {
  const Real dx = x - rsu.x;
  const Real dy = y - rsu.y;
  LinkGeometry g;
  g.distance = std::sqrt(dx * dx + dy * dy + rsu.height * rsu.height);
  g.azimuth = std::atan2(dy, dx);
  g.radial_velocity = (dx * vx + dy * vy) / g.distance;
  return g;
}

CVector effective_channel(const RsuConfig& rsu, const LinkGeometry& link, const ChannelParams& params) {
  const Real gain = std::sqrt(static_cast<Real>(rsu.antennas));
  return gain * channel_coefficient(link.distance, params) * steering_vector(link.azimuth, rsu.antennas);
}

std::optional<int> SubcarrierPlan::subcarrier_of(int vehicle) const {
  auto it = assignment.find(vehicle);
  if (it == assignment.end()) return std::nullopt;
  return it->second;
}

bool SubcarrierPlan::assigned(int vehicle, int k) const {
  auto s = subcarrier_of(vehicle);
  return s && *s == k;
}

SubcarrierPlan assign_subcarriers(const RsuConfig& rsu, int subcarriers, Real total_bandwidth_hz) {
  if (subcarriers < 1) throw InvalidInput("assign_subcarriers: need at least one subcarrier");
  if (static_cast<int>(rsu.served.size()) > subcarriers)
    throw OverloadError("RSU " + std::to_string(rsu.id) + " serves " + std::to_string(rsu.served.size()) +
                        " vehicles but has only " + std::to_string(subcarriers) + " subcarriers");
  SubcarrierPlan plan;
  plan.rsu = rsu.id;
  plan.subcarriers = subcarriers;
  plan.bandwidth_hz = total_bandwidth_hz / subcarriers;
  std::vector<int> ids = rsu.served;
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) plan.assignment[ids[i]] = static_cast<int>(i);
  return plan;
}

std::vector<int> cluster(Real x, Real y, std::span<const RsuConfig> rsus, int size) {
  if (size < 0 || size > static_cast<int>(rsus.size()))
    throw InvalidInput("cluster: cluster size exceeds the number of RSUs");
  std::vector<std::pair<Real, int>> by_distance;
  for (const auto& r : rsus) {
    const Real d2 = (x - r.x) * (x - r.x) + (y - r.y) * (y - r.y) + r.height * r.height;
    by_distance.emplace_back(d2, r.id);
  }
  std::sort(by_distance.begin(), by_distance.end());
  std::vector<int> out;
  for (int i = 0; i < size; ++i) out.push_back(by_distance[i].second);
  return out;
}

namespace {

const CVector& channel_of(const RadioSnapshot& snap, std::size_t r, int v) {
  auto it = snap.channels.at(r).find(v);
  if (it == snap.channels.at(r).end())
    throw InvalidInput("sinr: missing channel from RSU " + std::to_string(r) + " to vehicle " + std::to_string(v));
  return it->second;
}

}  // namespace

Real sinr(const RadioSnapshot& snap, int v, int k, Real noise_power) {
  const auto cl = snap.clusters.find(v);
  Real desired = 0.0;
  bool scheduled = false;
  if (cl != snap.clusters.end()) {
    for (int r : cl->second) {
      const auto ur = static_cast<std::size_t>(r);
      if (!snap.plans.at(ur).assigned(v, k)) continue;
      scheduled = true;
      desired += std::norm(channel_of(snap, ur, v).dot(snap.beams.at(ur).at(v)));
    }
  }
  if (!scheduled)
    throw InvalidInput("sinr: vehicle " + std::to_string(v) + " is not scheduled on subcarrier " + std::to_string(k));

  // co-subcarrier vehicles, grouped so that a vehicle's cluster adds coherently
  std::map<int, Complex> interference;
  for (std::size_t r = 0; r < snap.plans.size(); ++r) {
    for (const auto& [other, kk] : snap.plans[r].assignment) {
      if (other == v || kk != k) continue;
      interference[other] += channel_of(snap, r, v).dot(snap.beams.at(r).at(other));
    }
  }
  Real denom = noise_power;
  for (const auto& [_, amp] : interference) denom += std::norm(amp);
  return desired / denom;
}

std::optional<Real> sum_rate(const RadioSnapshot& snap, int v, Real noise_power) {
  std::set<int> ks;
  for (const auto& plan : snap.plans)
    if (auto k = plan.subcarrier_of(v)) ks.insert(*k);
  if (ks.empty()) return std::nullopt;
  Real total = 0.0;
  for (int k : ks) total += rate(sinr(snap, v, k, noise_power));
  return total;
}

bool sum_rate_ok(const RadioSnapshot& snap, int v, Real noise_power, Real min_rate) {
  auto r = sum_rate(snap, v, noise_power);
  return r && *r >= min_rate;
}

CVector conjugate_beamformer(const CVector& h, Real power) {
  const Real n = h.norm();
  if (!(n > 0.0)) throw InvalidInput("conjugate_beamformer: zero channel");
  if (!(power > 0.0)) throw InvalidInput("conjugate_beamformer: power must be positive");
  return std::sqrt(power) * h / n;
}

Real transmit_power(const RadioSnapshot& snap, int rsu) {
  Real p = 0.0;
  for (const auto& [_, f] : snap.beams.at(static_cast<std::size_t>(rsu))) p += f.squaredNorm();
  return p;
}

}  // namespace isac::radio
