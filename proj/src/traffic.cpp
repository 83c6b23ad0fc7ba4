#include "isac/traffic.hpp"

#include <algorithm>
#include <cmath>

namespace isac::traffic {

namespace {

bool finite_state(const VehicleState& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.speed) &&
         std::isfinite(s.accel) && std::isfinite(s.heading) && std::isfinite(s.length) &&
         std::isfinite(s.lag);
}

}  // namespace

int LaneGeometry::lane_of(Real y) const {
  const int lane = static_cast<int>(std::floor(y / width)) + 1;
  return std::clamp(lane, 1, count);
}

std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::Gap: return "gap";
    case Constraint::SpeedLow: return "speed_low";
    case Constraint::SpeedHigh: return "speed_high";
    case Constraint::AccelLow: return "accel_low";
    case Constraint::AccelHigh: return "accel_high";
    case Constraint::InputAccel: return "input_accel";
    case Constraint::InputSteering: return "input_steering";
  }
  return "unknown";
}

VehicleState step_vehicle(const VehicleState& s, const ControlInput& c, Real dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("step_vehicle: dt must be positive");
  if (!finite_state(s) || !std::isfinite(c.accel_cmd) || !std::isfinite(c.steering))
    throw InvalidInput("step_vehicle: non-finite input");
  if (!(s.length > 0.0) || !(s.lag > 0.0))
    throw InvalidInput("step_vehicle: length and actuation lag must be positive");

  VehicleState n = s;
  n.x = s.x + s.speed * std::cos(s.heading) * dt;
  n.y = s.y + s.speed * std::sin(s.heading) * dt;
  n.speed = s.speed + s.accel * dt;
  n.heading = wrap_angle(s.heading + std::tan(c.steering) * s.speed / s.length * dt);
  // first-order lag: z relaxes toward the commanded u
  n.accel = s.accel + (c.accel_cmd - s.accel) / s.lag * dt;
  return n;
}

VehicleState advance_vehicle(const VehicleState& state, const ControlInput& control, Real duration,
                             Real max_substep, const DrivingLimits& limits) {
  if (!(duration > 0.0)) throw InvalidInput("advance_vehicle: duration must be positive");
  const Real h = std::min(max_substep, state.lag);
  const int n = std::max(1, static_cast<int>(std::ceil(duration / h - 1e-9)));
  const Real dt = duration / n;
  VehicleState s = state;
  for (int i = 0; i < n; ++i) {
    s = step_vehicle(s, control, dt);
    if (s.speed < limits.speed_min) {
      s.speed = limits.speed_min;
      s.accel = std::max(s.accel, 0.0);
    } else if (s.speed > limits.speed_max) {
      s.speed = limits.speed_max;
      s.accel = std::min(s.accel, 0.0);
    }
  }
  return s;
}

ConstraintCheck enforce_constraints(const VehicleState& s, const ControlInput& c,
                                    const DrivingLimits& lim, std::optional<GapReport> gap) {
  ConstraintCheck out;
  out.control.accel_cmd = std::clamp(c.accel_cmd, -lim.u_max, lim.u_max);
  out.control.steering = std::clamp(c.steering, -lim.alpha_max, lim.alpha_max);
  auto& v = out.violations;
  if (gap && gap->gap < gap->desired_gap) v.push_back(Constraint::Gap);
  const Real vx = s.speed * std::cos(s.heading);
  if (vx < lim.speed_min) v.push_back(Constraint::SpeedLow);
  if (vx > lim.speed_max) v.push_back(Constraint::SpeedHigh);
  const Real zx = s.accel * std::cos(s.heading);
  if (zx < lim.accel_min) v.push_back(Constraint::AccelLow);
  if (zx > lim.accel_max) v.push_back(Constraint::AccelHigh);
  if (out.control.accel_cmd != c.accel_cmd) v.push_back(Constraint::InputAccel);
  if (out.control.steering != c.steering) v.push_back(Constraint::InputSteering);
  return out;
}

GapReport gap_report(const VehicleState& follower, const VehicleState& leader, Real standstill) {
  if (follower.id == leader.id) throw InvalidInput("gap_report: follower and leader are the same vehicle");
  if (follower.lane != leader.lane) throw InvalidInput("gap_report: vehicles are on different lanes");
  GapReport g;
  const Real raw = std::hypot(leader.x - follower.x, leader.y - follower.y) - follower.length;
  g.overlap = raw < 0.0;
  g.gap = std::max(raw, 0.0);
  g.standstill = standstill;
  g.velocity_error = follower.speed - leader.speed;
  g.desired_gap = standstill + follower.time_gap * g.velocity_error;
  g.spacing_error = g.gap - g.desired_gap;
  return g;
}

std::vector<int> neighbor_set(std::span<const VehicleState> world, int v, Real threshold) {
  if (!(threshold > 0.0)) throw InvalidInput("neighbor_set: threshold must be positive");
  auto self = std::find_if(world.begin(), world.end(), [v](const auto& s) { return s.id == v; });
  if (self == world.end()) throw InvalidInput("neighbor_set: unknown vehicle id " + std::to_string(v));
  std::vector<int> out;
  for (const auto& o : world) {
    if (o.id == v || o.lane != self->lane) continue;
    const Real gap = std::hypot(self->x - o.x, self->y - o.y) - self->length;
    if (gap <= threshold) out.push_back(o.id);
  }
  return out;
}

Real ttc(const VehicleState& follower, const VehicleState& leader, Real gap, Real speed_epsilon) {
  const Real closing = std::abs(follower.speed - leader.speed);
  if (gap <= 0.0) return 0.0;
  if (closing < speed_epsilon) return kInf;
  return gap / closing;
}

SafetyRecord cr_flag(Real ttc_value, Real speed, Real accel, Real react_time, Real brake_max) {
  if (react_time < 0.0) throw InvalidInput("cr_flag: negative reaction time");
  SafetyRecord r;
  r.ttc = ttc_value;
  r.react_time = react_time;
  r.brake_time = accel > 0.0 ? speed / accel : speed / brake_max;
  r.threshold = react_time + r.brake_time;
  r.cr_flag = ttc_value < r.threshold ? 1 : 0;
  return r;
}

Real cr_ratio(std::span<const int> history) {
  if (history.empty()) throw InvalidInput("cr_ratio: empty history");
  std::size_t risky = 0;
  for (int f : history) risky += (f != 0);
  return static_cast<Real>(risky) / static_cast<Real>(history.size());
}

Real hdv_accel(const VehicleState& self, const VehicleState* leader, const IdmParams& p,
               const DrivingLimits& limits) {
  if (!(p.desired_speed > 0.0) || !(p.max_accel > 0.0) || !(p.comfort_decel > 0.0))
    throw InvalidInput("hdv_accel: invalid IDM parameters");
  const Real v = std::max(self.speed, 0.0);
  Real a = p.max_accel * (1.0 - std::pow(v / p.desired_speed, p.exponent));
  if (leader) {
    const Real gap = std::hypot(leader->x - self.x, leader->y - self.y) - self.length;
    if (gap <= 0.0) return -limits.brake_max();
    const Real dv = v - leader->speed;
    const Real desired = p.min_gap + std::max(0.0, v * p.time_headway +
                                                       v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel)));
    a -= p.max_accel * (desired / gap) * (desired / gap);
  }
  return std::clamp(a, -limits.brake_max(), limits.u_max);
}

}  // namespace isac::traffic
