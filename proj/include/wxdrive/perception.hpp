#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "wxdrive/decision.hpp"
#include "wxdrive/road.hpp"
#include "wxdrive/scenario.hpp"
#include "wxdrive/traffic.hpp"
#include "wxdrive/weather.hpp"
#include "wxdrive/world.hpp"

namespace wxdrive {

enum class Sector { Front, Rear };

inline const char* to_string(Sector s) { return s == Sector::Front ? "front" : "rear"; }

struct Detection {
  int id = 0;
  Sector sector = Sector::Front;
  int lane_index = 0;
  double gap = 0.0;             // m, bumper to bumper
  double relative_speed = 0.0;  // m/s, other minus ego
  bool by_lidar = false;

  bool operator==(const Detection&) const = default;
};

/// Semantic LiDAR digest: one return per visible object.
struct LidarSummary {
  int num_points = 0;
  std::optional<double> mean_distance;
  std::optional<double> min_distance;
  std::optional<double> max_distance;

  bool operator==(const LidarSummary&) const = default;
};

struct Observation {
  VehicleState ego;
  std::vector<Detection> detected;  // ordered by vehicle id
  double visibility_used = 0.0;
  std::optional<LidarSummary> lidar;
  std::string weather_name;
  double speed_limit = kDefaultSpeedLimit;
  int lane_count = 0;

  bool operator==(const Observation&) const = default;
};

struct ScenePrompt {
  std::string system_text;
  std::string scene_text;
  std::string task_text;

  bool operator==(const ScenePrompt&) const = default;
};

namespace detail {

inline double bumper_gap(const VehicleState& ego, const VehicleState& other) {
  return other.s >= ego.s ? std::max(0.0, other.rear() - ego.front())
                          : std::max(0.0, ego.rear() - other.front());
}

inline double sensor_range(const VehicleState& ego, const VehicleState& other, const RoadNetwork& road) {
  return std::hypot(other.s - ego.s, lateral_position(other, road) - lateral_position(ego, road));
}

/// Per-vehicle random stream, independent of which other vehicles exist.
inline std::mt19937_64 vehicle_stream(std::uint64_t seed, std::int64_t tick, int id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tick), static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

}  // namespace detail

inline LidarSummary summarize_ranges(const std::vector<double>& ranges) {
  LidarSummary out;
  out.num_points = static_cast<int>(ranges.size());
  if (ranges.empty()) return out;
  out.mean_distance = std::accumulate(ranges.begin(), ranges.end(), 0.0) / static_cast<double>(ranges.size());
  const auto [lo, hi] = std::minmax_element(ranges.begin(), ranges.end());
  out.min_distance = *lo;
  out.max_distance = *hi;
  return out;
}

inline LidarSummary lidar_summary(const WorldState& world, const RoadNetwork& road,
                                  const WeatherEffects& fx) {
  const VehicleState& ego = world.ego();
  std::vector<double> ranges;
  for (const auto& v : world.vehicles) {
    if (v.is_ego) continue;
    const double r = detail::sensor_range(ego, v, road);
    if (r <= fx.lidar_visibility) ranges.push_back(r);
  }
  return summarize_ranges(ranges);
}

/// Weather- and rig-filtered view of the world. Camera detections suffer
/// seeded dropout and Gaussian gap noise; LiDAR detections are exact.
inline Observation observe(const WorldState& world, const RoadNetwork& road, const SensorRig& rig,
                           const WeatherEffects& fx, std::uint64_t seed,
                           const std::string& weather_name = {}) {
  const VehicleState& ego = world.ego();
  Observation obs;
  obs.ego = ego;
  obs.weather_name = weather_name;
  obs.speed_limit = road.speed_limit();
  obs.lane_count = road.lane_count();
  const bool any_camera = rig.front_cameras > 0 || rig.rear_cameras > 0;
  if (any_camera) obs.visibility_used = fx.camera_visibility;
  if (rig.lidar) obs.visibility_used = std::max(obs.visibility_used, fx.lidar_visibility);

  for (const auto& v : world.vehicles) {
    if (v.is_ego) continue;
    const Sector sector = v.s >= ego.s ? Sector::Front : Sector::Rear;
    const double gap = detail::bumper_gap(ego, v);

    auto rng = detail::vehicle_stream(seed, world.tick, v.id);
    const double dropout_draw = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double noise_draw = std::normal_distribution<double>(0.0, 1.0)(rng);

    Detection d{v.id, sector, v.lane_index, gap, v.speed - ego.speed, false};
    if (rig.lidar && detail::sensor_range(ego, v, road) <= fx.lidar_visibility) {
      d.by_lidar = true;
      obs.detected.push_back(d);
      continue;
    }
    const bool covered = sector == Sector::Front ? rig.front_cameras > 0 : rig.rear_cameras > 0;
    if (!covered || gap > fx.camera_visibility || dropout_draw < fx.detection_dropout) continue;
    d.gap = std::clamp(gap + fx.position_noise_sigma * noise_draw, 0.0, obs.visibility_used);
    obs.detected.push_back(d);
  }
  if (rig.lidar) obs.lidar = lidar_summary(world, road, fx);
  return obs;
}

inline std::string render_lidar_block(const LidarSummary& l) {
  std::string out = "Lidar data description:\n";
  if (l.num_points == 0) return out + "num_points: 0 (no objects in range)\n";
  return out + fmt::format("num_points: {}, mean_distance: {:.1f} m, min_distance: {:.1f} m, "
                           "max_distance: {:.1f} m\n",
                           l.num_points, *l.mean_distance, *l.min_distance, *l.max_distance);
}

inline ScenePrompt render_prompt(const Observation& obs, double remaining_distance) {
  ScenePrompt p;
  p.system_text =
      "You are the driver agent of an autonomous vehicle on a multilane highway. You receive a "
      "description of the weather, your own vehicle and the surrounding traffic as perceived by "
      "the onboard sensors. Drive safely, smoothly and efficiently, and do not exceed the speed "
      "limit.";

  std::string scene = fmt::format("Weather: {}. Sensor visibility: {:.1f} m.\n", obs.weather_name,
                                  obs.visibility_used);
  scene += fmt::format(
      "Ego vehicle: lane {} of {} (lane 0 is the leftmost), speed {:.1f} m/s, acceleration {:.1f} "
      "m/s^2. Speed limit: {:.2f} m/s.\n",
      obs.ego.lane_index, obs.lane_count, obs.ego.speed, obs.ego.accel, obs.speed_limit);
  scene += fmt::format("Remaining route distance: {:.1f} m.\n", remaining_distance);

  std::vector<Detection> ordered = obs.detected;
  std::stable_sort(ordered.begin(), ordered.end(), [](const Detection& a, const Detection& b) {
    if (a.sector != b.sector) return a.sector == Sector::Front;
    return a.gap < b.gap;
  });
  if (ordered.empty()) {
    scene += "No vehicles detected.\n";
  } else {
    scene += "Detected vehicles:\n";
    for (const auto& d : ordered) {
      scene += fmt::format("- {} in lane {}: gap {:.1f} m, relative speed {:+.1f} m/s\n",
                           d.sector == Sector::Front ? "ahead" : "behind", d.lane_index, d.gap,
                           d.relative_speed);
    }
  }
  if (obs.lidar) scene += render_lidar_block(*obs.lidar);
  p.scene_text = std::move(scene);

  std::string options;
  for (Decision d : kAllDecisions) {
    if (!options.empty()) options += ", ";
    options += to_string(d);
  }
  p.task_text = fmt::format(
      "Analyze the surroundings, then provide a driving decision. Choose exactly one of: {}. "
      "idle keeps the current speed and lane; turn_left and turn_right change to the adjacent "
      "lane. Give a short justification and finish with a line of the form `DECISION: <value>`.",
      options);
  return p;
}

}  // namespace wxdrive
