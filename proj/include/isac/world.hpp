#pragma once

#include "isac/config.hpp"
#include "isac/radio.hpp"
#include "isac/traffic.hpp"

#include <optional>
#include <vector>

namespace isac::sim {

/// Vehicles cannot be placed at the configured minimum gap.
struct InfeasibleScenario : InvalidInput {
  using InvalidInput::InvalidInput;
};

/// Ring road world. Vehicle ids equal their index: CAVs first, then HDVs.
struct World {
  traffic::LaneGeometry lanes;
  traffic::DrivingLimits limits;
  Real road_length = 0.0;
  int cavs = 0;
  int hdvs = 0;
  std::vector<traffic::VehicleState> vehicles;
  std::vector<traffic::IdmParams> idm;  // per vehicle, used by HDVs
  std::vector<radio::RsuConfig> rsus;

  bool is_cav(int id) const { return id < cavs; }
  int vehicle_count() const { return static_cast<int>(vehicles.size()); }
};

World build_world(const ScenarioConfig& config, std::uint64_t seed);

/// Forward distance along the ring from x_from to x_to, in [0, road_length).
Real ring_ahead(Real x_from, Real x_to, Real road_length);

/// Nearest vehicle ahead on the same lane, if any other vehicle shares the lane.
std::optional<int> leader_of(const World& world, int id);

/// Copy of `leader` shifted by whole laps so that it sits ahead of `follower` on the ring.
traffic::VehicleState unwrapped(const traffic::VehicleState& follower, traffic::VehicleState leader,
                                Real road_length);

}  // namespace isac::sim
