#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <string_view>

#include "wxdrive/error.hpp"
#include "wxdrive/road.hpp"

namespace wxdrive {

/// Simulator weather vector. Percentages are in [0, 100].
struct WeatherConfig {
  double cloudiness = 0.0;
  double precipitation = 0.0;
  double precipitation_deposits = 0.0;
  double wind_intensity = 0.0;
  double sun_altitude_angle = 0.0;  // degrees, [-90, 90]
  double fog_density = 0.0;
  double fog_distance = 0.0;  // m
  double wetness = 0.0;

  bool operator==(const WeatherConfig&) const = default;
};

struct WeatherEffects {
  double camera_visibility = 0.0;  // m
  double lidar_visibility = 0.0;   // m
  double detection_dropout = 0.0;  // probability
  double position_noise_sigma = 0.0;  // m
  double friction = 1.0;
};

/// Every coefficient of the weather -> sensing/friction mapping.
/// cloudiness, wind_intensity and sun_altitude_angle are carried through
/// configs and logs but are inert here.
struct DegradationModel {
  double camera_range = 150.0;
  double camera_precip_loss = 0.3;
  double lidar_range = 100.0;
  double lidar_fog_loss = 0.3;
  double dropout_per_precip = 0.2;
  double noise_scale = 0.5;
  double friction_wetness_loss = 0.4;
  double friction_deposit_loss = 0.1;
  double friction_floor = 0.3;
};

inline constexpr std::array<std::string_view, 5> kPresetNames{"heavy_rain", "storm", "fog",
                                                              "wetness", "good"};

inline bool is_preset_name(std::string_view name) {
  return std::find(kPresetNames.begin(), kPresetNames.end(), name) != kPresetNames.end();
}

inline WeatherConfig preset(std::string_view name) {
  // cloudiness, precipitation, deposits, wind, sun altitude, fog density,
  // fog distance, wetness
  if (name == "heavy_rain") return {80.0, 70.0, 60.0, 30.0, 45.0, 10.0, 10.0, 80.0};
  if (name == "storm") return {80.0, 100.0, 100.0, 100.0, 20.0, 20.0, 10.0, 80.0};
  if (name == "fog") return {40.0, 5.0, 5.0, 10.0, 60.0, 70.0, 3.0, 10.0};
  if (name == "wetness") return {30.0, 0.0, 0.0, 0.0, 70.0, 0.0, 0.0, 100.0};
  if (name == "good") return {0.0, 0.0, 0.0, 0.0, 60.0, 0.0, 20.0, 0.0};
  throw ConfigError("unknown weather preset '" + std::string(name) + "'");
}

inline void validate(const WeatherConfig& cfg) {
  auto pct = [](double v, const char* field) {
    if (!(v >= 0.0 && v <= 100.0)) {
      throw ConfigError(std::string("weather ") + field + " must be in [0, 100]");
    }
  };
  pct(cfg.cloudiness, "cloudiness");
  pct(cfg.precipitation, "precipitation");
  pct(cfg.precipitation_deposits, "precipitation_deposits");
  pct(cfg.wind_intensity, "wind_intensity");
  pct(cfg.fog_density, "fog_density");
  pct(cfg.wetness, "wetness");
  if (!(cfg.fog_distance >= 0.0)) throw ConfigError("weather fog_distance must be >= 0");
  if (!(cfg.sun_altitude_angle >= -90.0 && cfg.sun_altitude_angle <= 90.0)) {
    throw ConfigError("weather sun_altitude_angle must be in [-90, 90]");
  }
}

inline WeatherEffects effects(const WeatherConfig& cfg, const DegradationModel& m = {}) {
  const double fog = cfg.fog_density / 100.0;
  const double precip = cfg.precipitation / 100.0;
  WeatherEffects e;
  e.camera_visibility = std::max(m.camera_range * (1.0 - fog) * (1.0 - m.camera_precip_loss * precip),
                                 cfg.fog_distance);
  e.lidar_visibility = m.lidar_range * (1.0 - m.lidar_fog_loss * fog);
  e.detection_dropout = m.dropout_per_precip * precip;
  e.position_noise_sigma = m.noise_scale * (cfg.precipitation + cfg.fog_density) / 200.0;
  e.friction = std::max(1.0 - m.friction_wetness_loss * cfg.wetness / 100.0 -
                            m.friction_deposit_loss * cfg.precipitation_deposits / 100.0,
                        m.friction_floor);
  return e;
}

/// Largest longitudinal acceleration magnitude the road surface supports.
inline double max_braking(const WeatherEffects& e) { return e.friction * kGravity; }

}  // namespace wxdrive
