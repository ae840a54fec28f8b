#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <spdlog/spdlog.h>

#include "wxdrive/decision.hpp"
#include "wxdrive/error.hpp"
#include "wxdrive/road.hpp"
#include "wxdrive/scenario.hpp"
#include "wxdrive/world.hpp"

namespace wxdrive {

/// Intelligent Driver Model parameters for NPC car following. The desired
/// speed is the road speed limit.
struct IdmParams {
  double time_headway = 1.5;       // s
  double max_accel = 1.5;          // m/s^2
  double comfortable_decel = 2.0;  // m/s^2
  double min_gap = 2.0;            // m
  double exponent = 4.0;
};

struct DynamicsParams {
  IdmParams idm;
  double lane_change_duration = 3.0;  // s
};

/// Longitudinal magnitudes of the accelerate/decelerate decisions.
struct DecisionParams {
  double accel_step = 2.0;  // m/s^2
  double decel_step = 3.0;  // m/s^2
};

inline constexpr int kEgoId = 0;

/// Lateral coordinate of a vehicle, measured rightwards from the left edge.
inline double lateral_position(const VehicleState& v, const RoadNetwork& road) {
  return road.lane_center(v.lane_index) + v.lateral_offset;
}

/// Places the ego at the route start and `n_vehicles` NPCs anywhere on the
/// road with at least `spacing` bumper gap to every same-lane vehicle.
inline WorldState spawn_traffic(const Scenario& sc) {
  validate(sc);
  const RoadNetwork road = build_road(sc.road);
  if (sc.route_goal > road.total_length()) throw ConfigError("route goal lies beyond the road end");
  if (!road.valid_lane(sc.ego_lane)) throw ConfigError("ego lane outside the road");

  const TrafficSpec& t = sc.traffic;
  const double pitch = t.spacing + t.vehicle_length;
  const double usable = road.total_length() - t.vehicle_length;
  if (usable < 0.0) throw ConfigError("road shorter than one vehicle");
  const long per_lane = static_cast<long>(std::floor(usable / pitch)) + 1;
  if (static_cast<long>(road.lane_count()) * per_lane < t.n_vehicles + 1L) {
    throw ConfigError("road too short to place " + std::to_string(t.n_vehicles) +
                      " vehicles at " + std::to_string(t.spacing) + " m spacing");
  }

  WorldState world;
  VehicleState ego;
  ego.id = kEgoId;
  ego.is_ego = true;
  ego.lane_index = sc.ego_lane;
  ego.s = sc.route_start;
  ego.speed = sc.ego_speed;
  ego.length = t.vehicle_length;
  world.vehicles.push_back(ego);

  std::mt19937_64 rng(sc.seed);
  std::uniform_int_distribution<int> lane_dist(0, road.lane_count() - 1);
  std::uniform_real_distribution<double> s_dist(0.5 * t.vehicle_length,
                                                road.total_length() - 0.5 * t.vehicle_length);
  std::normal_distribution<double> speed_dist(t.speed_mean, t.speed_sd);

  constexpr int kMaxAttempts = 10000;
  for (int id = 1; id <= t.n_vehicles; ++id) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const int lane = lane_dist(rng);
      const double s = s_dist(rng);
      const bool clear = std::none_of(world.vehicles.begin(), world.vehicles.end(), [&](const auto& v) {
        return v.lane_index == lane && std::abs(v.s - s) < pitch;
      });
      if (!clear) continue;
      VehicleState npc;
      npc.id = id;
      npc.lane_index = lane;
      npc.s = s;
      npc.speed = std::max(0.0, speed_dist(rng));
      npc.length = t.vehicle_length;
      world.vehicles.push_back(npc);
      placed = true;
    }
    if (!placed) {
      throw ConfigError("road too short to place " + std::to_string(t.n_vehicles) +
                        " vehicles at " + std::to_string(t.spacing) + " m spacing");
    }
  }
  return world;
}

/// Nearest vehicle strictly ahead of `self` in its lane, or nullptr.
inline const VehicleState* find_leader(const std::vector<VehicleState>& vehicles,
                                       const VehicleState& self) {
  const VehicleState* lead = nullptr;
  for (const auto& v : vehicles) {
    if (v.id == self.id || v.lane_index != self.lane_index) continue;
    if (v.s < self.s || (v.s == self.s && v.id < self.id)) continue;
    if (lead == nullptr || v.s < lead->s) lead = &v;
  }
  return lead;
}

inline double idm_accel(const VehicleState& self, const VehicleState* lead, double desired_speed,
                        const IdmParams& p) {
  double accel = 1.0 - std::pow(self.speed / desired_speed, p.exponent);
  if (lead != nullptr) {
    const double gap = std::max(lead->rear() - self.front(), 0.1);
    const double dv = self.speed - lead->speed;
    const double desired_gap =
        p.min_gap + std::max(0.0, self.speed * p.time_headway +
                                      self.speed * dv / (2.0 * std::sqrt(p.max_accel * p.comfortable_decel)));
    accel -= (desired_gap / gap) * (desired_gap / gap);
  }
  return p.max_accel * accel;
}

/// Bumper-to-bumper time to collision with the ego's lead vehicle; +inf when
/// there is no lead or the ego is not closing in.
inline double ttc(const WorldState& world) {
  const VehicleState& ego = world.ego();
  const VehicleState* lead = find_leader(world.vehicles, ego);
  if (lead == nullptr) return std::numeric_limits<double>::infinity();
  const double closing = ego.speed - lead->speed;
  if (!(closing > 0.0)) return std::numeric_limits<double>::infinity();
  return std::max(0.0, lead->rear() - ego.front()) / closing;
}

inline double clip_accel(double accel, double cap) { return std::clamp(accel, -cap, cap); }

inline std::vector<std::pair<int, int>> detect_collisions(const std::vector<VehicleState>& vehicles) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
      const auto& a = vehicles[i];
      const auto& b = vehicles[j];
      if (a.lane_index != b.lane_index) continue;
      if (std::abs(a.s - b.s) < 0.5 * (a.length + b.length)) {
        out.emplace_back(std::min(a.id, b.id), std::max(a.id, b.id));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Advances the world by one tick. `control` is updated in place (lane
/// change progress). Accelerations saturate at `friction * g`.
inline WorldState step(const WorldState& world, const RoadNetwork& road, EgoControl& control,
                       double friction, double dt, const DynamicsParams& params = {}) {
  const double cap = friction * kGravity;
  WorldState next;
  next.tick = world.tick + 1;
  next.time = static_cast<double>(next.tick) * dt;
  next.vehicles.reserve(world.vehicles.size());

  for (const auto& v : world.vehicles) {
    double accel = v.is_ego ? control.commanded_accel
                            : idm_accel(v, find_leader(world.vehicles, v), road.speed_limit(), params.idm);
    accel = clip_accel(accel, cap);
    VehicleState n = v;
    double speed = v.speed + accel * dt;
    if (speed < 0.0) {
      accel = -v.speed / dt;
      speed = 0.0;
    }
    n.s = v.s + v.speed * dt + 0.5 * accel * dt * dt;
    n.speed = speed;
    n.accel = accel;

    if (v.is_ego && control.changing_lane()) {
      double progress = control.lane_change_progress + dt / params.lane_change_duration;
      if (progress > 1.0 - 1e-9) progress = 1.0;  // absorb accumulated rounding
      control.lane_change_progress = progress;
      const double p = control.lane_change_progress;
      const double shift = (control.target_lane - control.origin_lane) * road.lane_width() *
                           0.5 * (1.0 - std::cos(std::numbers::pi * p));
      const double y = road.lane_center(control.origin_lane) + shift;
      n.lane_index = p >= 0.5 ? control.target_lane : control.origin_lane;
      n.lateral_offset = y - road.lane_center(n.lane_index);
      if (p >= 1.0) {
        n.lateral_offset = 0.0;
        control.origin_lane = control.target_lane;
        control.lane_change_progress = 0.0;
      }
    }
    if (!v.is_ego && n.s > road.total_length()) continue;  // left the network
    next.vehicles.push_back(n);
  }
  next.collisions = detect_collisions(next.vehicles);
  return next;
}

/// Initial control for a freshly spawned world.
inline EgoControl initial_control(const VehicleState& ego) {
  EgoControl c;
  c.origin_lane = ego.lane_index;
  c.target_lane = ego.lane_index;
  return c;
}

/// Maps an agent decision onto ego actuation. Idle keeps speed (zero
/// longitudinal accel) and leaves any lane change in progress running. Lane
/// changes that are impossible degrade to idle with a warning.
inline EgoControl apply_decision(Decision decision, const VehicleState& ego, const RoadNetwork& road,
                                 const EgoControl& current, const DecisionParams& params = {}) {
  EgoControl out = current;
  out.degraded = false;
  if (!out.changing_lane()) {
    out.origin_lane = ego.lane_index;
    out.target_lane = ego.lane_index;
    out.lane_change_progress = 0.0;
  }
  auto as_idle = [&](const char* why) {
    spdlog::warn("{} at lane {}: {}; treated as idle", to_string(decision), ego.lane_index, why);
    out.commanded_accel = 0.0;
    out.degraded = true;
    return out;
  };

  switch (decision) {
    case Decision::Idle:
      out.commanded_accel = 0.0;
      return out;
    case Decision::Accelerate:
      out.commanded_accel = params.accel_step;
      return out;
    case Decision::Decelerate:
      out.commanded_accel = -params.decel_step;
      return out;
    case Decision::TurnLeft:
    case Decision::TurnRight: {
      if (out.changing_lane()) return as_idle("lane change already in progress");
      const int target = ego.lane_index + (decision == Decision::TurnLeft ? -1 : 1);
      if (!road.valid_lane(target)) return as_idle("no lane on that side");
      out.origin_lane = ego.lane_index;
      out.target_lane = target;
      out.lane_change_progress = 0.0;
      out.commanded_accel = 0.0;
      return out;
    }
  }
  return out;
}

inline EgoControl apply_decision(Decision decision, const VehicleState& ego, const RoadNetwork& road) {
  return apply_decision(decision, ego, road, initial_control(ego));
}

}  // namespace wxdrive
