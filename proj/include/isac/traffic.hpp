#pragma once

#include "isac/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace isac::traffic {

enum class VehicleKind { Cav, Hdv };

struct VehicleState {
  int id = 0;
  VehicleKind kind = VehicleKind::Cav;
  int lane = 1;          // 1..L
  Real x = 0.0;          // longitudinal position (m)
  Real y = 0.0;          // lateral position (m)
  Real speed = 0.0;      // m/s
  Real accel = 0.0;      // m/s^2
  Real heading = 0.0;    // rad, [-pi, pi]
  Real length = 4.0;     // m
  Real lag = 0.02;       // actuation lag (s)
  Real time_gap = 1.0;   // s
};

struct ControlInput {
  Real accel_cmd = 0.0;  // u
  Real steering = 0.0;   // alpha
};

struct DrivingLimits {
  Real u_max = 5.0;
  Real alpha_max = 0.1;
  Real accel_min = -3.0;  // lower bound on z cos(theta)
  Real accel_max = 5.0;   // upper bound on z cos(theta)
  Real speed_min = 0.0;
  Real speed_max = 40.0;

  // Braking capability used when the current acceleration gives no braking time.
  Real brake_max() const { return -accel_min; }
};

struct LaneGeometry {
  int count = 2;
  Real width = 4.0;

  Real center(int lane) const { return width / 2.0 + (lane - 1) * width; }
  int lane_of(Real y) const;
};

struct GapReport {
  Real gap = 0.0;          // bumper gap to the predecessor
  Real desired_gap = 0.0;  // d = d0 + T (v_f - v_l)
  Real spacing_error = 0.0;
  Real velocity_error = 0.0;
  Real standstill = 0.0;
  bool overlap = false;    // raw gap was negative and has been clamped to 0
};

struct SafetyRecord {
  Real ttc = kInf;
  Real threshold = 0.0;
  Real react_time = 1.0;
  Real brake_time = 0.0;
  int cr_flag = 0;
};

enum class Constraint { Gap, SpeedLow, SpeedHigh, AccelLow, AccelHigh, InputAccel, InputSteering };

std::string to_string(Constraint c);

struct ConstraintCheck {
  ControlInput control;
  std::vector<Constraint> violations;
};

// Intelligent Driver Model parameters for human-driven vehicles.
struct IdmParams {
  Real desired_speed = 25.0;
  Real max_accel = 1.5;
  Real comfort_decel = 2.0;
  Real min_gap = 2.0;
  Real time_headway = 1.5;
  Real exponent = 4.0;
};

inline constexpr Real kSpeedEpsilon = 1e-3;

// One forward-Euler step of the kinematic bicycle with first-order actuator lag.
VehicleState step_vehicle(const VehicleState& state, const ControlInput& control, Real dt);

// Integrates over `duration` with Euler sub-steps no longer than `max_substep` or the
// actuation lag, then clamps speed into the driving limits.
VehicleState advance_vehicle(const VehicleState& state, const ControlInput& control, Real duration,
                             Real max_substep, const DrivingLimits& limits);

// Clips the control into its box and lists every violated driving constraint. `gap` is
// optional because the lead vehicle of a lane has no spacing constraint.
ConstraintCheck enforce_constraints(const VehicleState& state, const ControlInput& control,
                                    const DrivingLimits& limits,
                                    std::optional<GapReport> gap = std::nullopt);

GapReport gap_report(const VehicleState& follower, const VehicleState& leader, Real standstill);

// Same-lane vehicles whose gap from v is within `threshold` (inclusive).
std::vector<int> neighbor_set(std::span<const VehicleState> world, int v, Real threshold);

Real ttc(const VehicleState& follower, const VehicleState& leader, Real gap,
         Real speed_epsilon = kSpeedEpsilon);

SafetyRecord cr_flag(Real ttc_value, Real speed, Real accel, Real react_time, Real brake_max);

Real cr_ratio(std::span<const int> history);

Real hdv_accel(const VehicleState& self, const VehicleState* leader, const IdmParams& params,
               const DrivingLimits& limits);

}  // namespace isac::traffic
