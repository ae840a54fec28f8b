#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace wxdrive {

struct VehicleState {
  int id = 0;
  int lane_index = 0;
  double s = 0.0;               // m along the reference line
  double lateral_offset = 0.0;  // m from the lane center, positive rightwards
  double speed = 0.0;           // m/s
  double accel = 0.0;           // m/s^2, as applied during the last step
  double length = 4.5;          // m
  bool is_ego = false;

  double front() const { return s + 0.5 * length; }
  double rear() const { return s - 0.5 * length; }

  bool operator==(const VehicleState&) const = default;
};

/// Immutable per-tick snapshot of the simulation.
struct WorldState {
  std::int64_t tick = 0;
  double time = 0.0;
  std::vector<VehicleState> vehicles;
  /// Pairs (a, b) with a < b whose bodies overlap at this tick.
  std::vector<std::pair<int, int>> collisions;

  const VehicleState& ego() const {
    return *std::find_if(vehicles.begin(), vehicles.end(),
                         [](const VehicleState& v) { return v.is_ego; });
  }

  bool ego_collided() const {
    const int id = ego().id;
    return std::any_of(collisions.begin(), collisions.end(),
                       [id](const auto& c) { return c.first == id || c.second == id; });
  }

  bool operator==(const WorldState&) const = default;
};

/// Ego actuation state carried between ticks. A lane change is in progress
/// while `target_lane != origin_lane`.
struct EgoControl {
  double commanded_accel = 0.0;
  int origin_lane = 0;
  int target_lane = 0;
  double lane_change_progress = 0.0;  // [0, 1]
  /// Set when the requested decision could not be honoured and was replaced
  /// by the idle action.
  bool degraded = false;

  bool changing_lane() const { return target_lane != origin_lane; }

  bool operator==(const EgoControl&) const = default;
};

}  // namespace wxdrive
