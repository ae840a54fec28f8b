#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "wxdrive/error.hpp"
#include "wxdrive/road.hpp"
#include "wxdrive/weather.hpp"

namespace wxdrive {

/// Enabled perception set. Cameras cover a half plane each (front/rear).
struct SensorRig {
  int front_cameras = 3;
  int rear_cameras = 0;
  bool lidar = false;

  bool operator==(const SensorRig&) const = default;

  /// Short label such as "3cam", "6cam+lidar".
  std::string label() const {
    std::string out = std::to_string(front_cameras + rear_cameras) + "cam";
    if (lidar) out += "+lidar";
    return out;
  }
};

struct TrafficSpec {
  int n_vehicles = 10;
  double spacing = 25.0;     // minimum same-lane bumper gap at spawn, m
  double speed_mean = 12.0;  // m/s
  double speed_sd = 1.5;     // m/s
  double vehicle_length = 4.5;
};

struct Scenario {
  RoadSpec road;
  double route_start = 50.0;
  double route_goal = 450.0;
  int ego_lane = 1;
  double ego_speed = 10.0;
  TrafficSpec traffic;
  std::uint64_t seed = 1;
  /// Preset name, or a free label when `weather_override` is set.
  std::string weather_preset = "good";
  std::optional<WeatherConfig> weather_override;
  SensorRig rig;
  int max_ticks = 1200;
  int decision_period = 10;
  double dt = 0.1;

  WeatherConfig weather() const {
    return weather_override ? *weather_override : preset(weather_preset);
  }
};

inline void validate(const Scenario& sc) {
  if (!(sc.route_goal > sc.route_start)) throw ConfigError("route goal must be beyond start");
  if (sc.route_start < 0.0) throw ConfigError("route start must be >= 0");
  if (sc.traffic.n_vehicles < 0) throw ConfigError("n_vehicles must be >= 0");
  if (!(sc.traffic.spacing >= 0.0)) throw ConfigError("spacing must be >= 0");
  if (!(sc.traffic.vehicle_length > 0.0)) throw ConfigError("vehicle_length must be > 0");
  if (sc.decision_period < 1) throw ConfigError("decision_period must be >= 1");
  if (sc.max_ticks < 1) throw ConfigError("max_ticks must be >= 1");
  if (!(sc.dt > 0.0)) throw ConfigError("dt must be > 0");
  if (sc.ego_speed < 0.0) throw ConfigError("ego speed must be >= 0");
  if (sc.rig.front_cameras < 0 || sc.rig.rear_cameras < 0) {
    throw ConfigError("camera counts must be >= 0");
  }
  validate(sc.weather());
}

}  // namespace wxdrive
