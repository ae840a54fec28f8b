#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "wxdrive/channel.hpp"
#include "wxdrive/error.hpp"
#include "wxdrive/scenario.hpp"
#include "wxdrive/scoring.hpp"
#include "wxdrive/traffic.hpp"
#include "wxdrive/weather.hpp"

namespace wxdrive {

struct AgentConfig {
  std::string target = "builtin:baseline";
  int timeout_ms = 5000;
  int retries = 1;

  bool operator==(const AgentConfig&) const = default;
};

/// Everything needed to reproduce one closed-loop run.
struct RunConfig {
  Scenario scenario;
  AgentConfig agent;
  DecisionParams decisions;
  DynamicsParams dynamics;
  DegradationModel degradation;
  ScoringParams scoring;
  std::string output = "runs/default";
  std::string log_level = "warn";
};

inline void validate(const RunConfig& cfg) {
  validate(cfg.scenario);
  validate(cfg.scoring);
  if (!is_known_agent_target(cfg.agent.target)) {
    throw ConfigError("unresolvable agent target '" + cfg.agent.target + "'");
  }
  if (cfg.agent.timeout_ms <= 0) throw ConfigError("agent timeout_ms must be > 0");
  if (cfg.agent.retries < 0) throw ConfigError("agent retries must be >= 0");
  if (!(cfg.dynamics.lane_change_duration > 0.0)) throw ConfigError("lane_change_duration must be > 0");
  if (cfg.output.empty()) throw ConfigError("output directory must be set");
}

// ---------------------------------------------------------------------------
// JSON <-> config. The YAML config file is converted to this JSON shape
// first, so one schema covers config files and the copy embedded in reports.

namespace detail {

using json = nlohmann::json;

/// Rejects keys outside `allowed` so typos do not silently fall back to
/// defaults.
inline void check_keys(const json& j, const char* block, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(block) + " must be a block of key/value pairs");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + block);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("bad value for '") + key + "'");
    }
  }
}

inline json limits_json(const ComfortLimits& l) {
  return {{"acc", l.acc}, {"jerk", l.jerk}, {"lat_acc", l.lat_acc}, {"lat_jerk", l.lat_jerk}};
}

inline void read_limits(const json& j, const char* block, ComfortLimits& l) {
  check_keys(j, block, {"acc", "jerk", "lat_acc", "lat_jerk"});
  read(j, "acc", l.acc);
  read(j, "jerk", l.jerk);
  read(j, "lat_acc", l.lat_acc);
  read(j, "lat_jerk", l.lat_jerk);
}

}  // namespace detail

inline nlohmann::json weather_to_json(const WeatherConfig& w) {
  return {{"cloudiness", w.cloudiness},
          {"precipitation", w.precipitation},
          {"precipitation_deposits", w.precipitation_deposits},
          {"wind_intensity", w.wind_intensity},
          {"sun_altitude_angle", w.sun_altitude_angle},
          {"fog_density", w.fog_density},
          {"fog_distance", w.fog_distance},
          {"wetness", w.wetness}};
}

/// Parses an explicit 8-field weather block; every field is required.
inline WeatherConfig weather_from_json(const nlohmann::json& j) {
  detail::check_keys(j, "weather",
                     {"name", "cloudiness", "precipitation", "precipitation_deposits", "wind_intensity",
                      "sun_altitude_angle", "fog_density", "fog_distance", "wetness"});
  WeatherConfig w;
  auto req = [&](const char* key, double& out) {
    if (!j.contains(key)) throw ConfigError(std::string("weather block is missing '") + key + "'");
    detail::read(j, key, out);
  };
  req("cloudiness", w.cloudiness);
  req("precipitation", w.precipitation);
  req("precipitation_deposits", w.precipitation_deposits);
  req("wind_intensity", w.wind_intensity);
  req("sun_altitude_angle", w.sun_altitude_angle);
  req("fog_density", w.fog_density);
  req("fog_distance", w.fog_distance);
  req("wetness", w.wetness);
  validate(w);
  return w;
}

inline nlohmann::json rig_to_json(const SensorRig& r) {
  return {{"front_cameras", r.front_cameras}, {"rear_cameras", r.rear_cameras}, {"lidar", r.lidar}};
}

inline SensorRig rig_from_json(const nlohmann::json& j) {
  detail::check_keys(j, "rig", {"name", "front_cameras", "rear_cameras", "lidar"});
  SensorRig r;
  detail::read(j, "front_cameras", r.front_cameras);
  detail::read(j, "rear_cameras", r.rear_cameras);
  detail::read(j, "lidar", r.lidar);
  return r;
}

inline nlohmann::json scoring_to_json(const ScoringParams& p) {
  return {{"tau_th", p.tau_th},
          {"style", to_string(p.style)},
          {"alpha", p.alpha},
          {"v_limit", p.v_limit},
          {"sparse_radius", p.sparse_radius},
          {"refs",
           {{"cautious", detail::limits_json(p.refs.cautious)},
            {"normal", detail::limits_json(p.refs.normal)},
            {"aggressive", detail::limits_json(p.refs.aggressive)}}}};
}

inline ScoringParams scoring_from_json(const nlohmann::json& j, ScoringParams p = {}) {
  detail::check_keys(j, "scoring", {"tau_th", "style", "alpha", "v_limit", "sparse_radius", "refs"});
  detail::read(j, "tau_th", p.tau_th);
  if (j.contains("style")) p.style = driving_style_from_string(j["style"].get<std::string>());
  if (j.contains("alpha")) {
    const auto& a = j["alpha"];
    if (!a.is_array() || a.size() != 3) throw ConfigError("alpha must list three weights");
    for (std::size_t i = 0; i < 3; ++i) p.alpha[i] = a[i].get<double>();
  }
  detail::read(j, "v_limit", p.v_limit);
  detail::read(j, "sparse_radius", p.sparse_radius);
  if (j.contains("refs")) {
    const auto& r = j["refs"];
    detail::check_keys(r, "refs", {"cautious", "normal", "aggressive"});
    if (r.contains("cautious")) detail::read_limits(r["cautious"], "refs.cautious", p.refs.cautious);
    if (r.contains("normal")) detail::read_limits(r["normal"], "refs.normal", p.refs.normal);
    if (r.contains("aggressive")) detail::read_limits(r["aggressive"], "refs.aggressive", p.refs.aggressive);
  }
  return p;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  using json = nlohmann::json;
  const Scenario& sc = c.scenario;
  json segments = json::array();
  for (const auto& seg : sc.road.segments) {
    json s{{"type", to_string(seg.kind)}, {"length", seg.length}};
    if (seg.kind == SegmentKind::Arc) s["curvature"] = seg.curvature;
    segments.push_back(s);
  }
  json weather;
  if (sc.weather_override) {
    weather = weather_to_json(*sc.weather_override);
    weather["name"] = sc.weather_preset;
  } else {
    weather = sc.weather_preset;
  }
  const IdmParams& idm = c.dynamics.idm;
  const DegradationModel& m = c.degradation;
  return {
      {"scenario",
       {{"seed", sc.seed},
        {"max_ticks", sc.max_ticks},
        {"decision_period", sc.decision_period},
        {"dt", sc.dt},
        {"route", {{"start", sc.route_start}, {"goal", sc.route_goal}}},
        {"ego", {{"lane", sc.ego_lane}, {"speed", sc.ego_speed}}},
        {"road",
         {{"lane_count", sc.road.lane_count},
          {"lane_width", sc.road.lane_width},
          {"speed_limit", sc.road.speed_limit},
          {"segments", segments}}},
        {"traffic",
         {{"n_vehicles", sc.traffic.n_vehicles},
          {"spacing", sc.traffic.spacing},
          {"speed_mean", sc.traffic.speed_mean},
          {"speed_sd", sc.traffic.speed_sd},
          {"vehicle_length", sc.traffic.vehicle_length}}},
        {"weather", weather},
        {"rig", rig_to_json(sc.rig)}}},
      {"agent", {{"target", c.agent.target}, {"timeout_ms", c.agent.timeout_ms}, {"retries", c.agent.retries}}},
      {"decisions", {{"accel_step", c.decisions.accel_step}, {"decel_step", c.decisions.decel_step}}},
      {"dynamics",
       {{"lane_change_duration", c.dynamics.lane_change_duration},
        {"idm",
         {{"time_headway", idm.time_headway},
          {"max_accel", idm.max_accel},
          {"comfortable_decel", idm.comfortable_decel},
          {"min_gap", idm.min_gap},
          {"exponent", idm.exponent}}}}},
      {"degradation",
       {{"camera_range", m.camera_range},
        {"camera_precip_loss", m.camera_precip_loss},
        {"lidar_range", m.lidar_range},
        {"lidar_fog_loss", m.lidar_fog_loss},
        {"dropout_per_precip", m.dropout_per_precip},
        {"noise_scale", m.noise_scale},
        {"friction_wetness_loss", m.friction_wetness_loss},
        {"friction_deposit_loss", m.friction_deposit_loss},
        {"friction_floor", m.friction_floor}}},
      {"scoring", scoring_to_json(c.scoring)},
      {"output", c.output},
      {"log_level", c.log_level}};
}

/// Missing keys keep their defaults; unknown keys are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read;
  RunConfig c;
  check_keys(j, "config", {"scenario", "agent", "decisions", "dynamics", "degradation", "scoring", "output",
                           "log_level"});
  if (j.contains("scenario")) {
    const auto& s = j["scenario"];
    Scenario& sc = c.scenario;
    check_keys(s, "scenario", {"seed", "max_ticks", "decision_period", "dt", "route", "ego", "road", "traffic",
                               "weather", "rig"});
    read(s, "seed", sc.seed);
    read(s, "max_ticks", sc.max_ticks);
    read(s, "decision_period", sc.decision_period);
    read(s, "dt", sc.dt);
    if (s.contains("route")) {
      check_keys(s["route"], "route", {"start", "goal"});
      read(s["route"], "start", sc.route_start);
      read(s["route"], "goal", sc.route_goal);
    }
    if (s.contains("ego")) {
      check_keys(s["ego"], "ego", {"lane", "speed"});
      read(s["ego"], "lane", sc.ego_lane);
      read(s["ego"], "speed", sc.ego_speed);
    }
    if (s.contains("road")) {
      const auto& r = s["road"];
      check_keys(r, "road", {"lane_count", "lane_width", "speed_limit", "segments"});
      read(r, "lane_count", sc.road.lane_count);
      read(r, "lane_width", sc.road.lane_width);
      read(r, "speed_limit", sc.road.speed_limit);
      if (r.contains("segments")) {
        if (!r["segments"].is_array()) throw ConfigError("road.segments must be a list");
        sc.road.segments.clear();
        for (const auto& seg : r["segments"]) {
          check_keys(seg, "segment", {"type", "length", "curvature"});
          Segment out;
          std::string type = "straight";
          read(seg, "type", type);
          out.kind = segment_kind_from_string(type);
          read(seg, "length", out.length);
          read(seg, "curvature", out.curvature);
          sc.road.segments.push_back(out);
        }
      }
    }
    if (s.contains("traffic")) {
      const auto& t = s["traffic"];
      check_keys(t, "traffic", {"n_vehicles", "spacing", "speed_mean", "speed_sd", "vehicle_length"});
      read(t, "n_vehicles", sc.traffic.n_vehicles);
      read(t, "spacing", sc.traffic.spacing);
      read(t, "speed_mean", sc.traffic.speed_mean);
      read(t, "speed_sd", sc.traffic.speed_sd);
      read(t, "vehicle_length", sc.traffic.vehicle_length);
    }
    if (s.contains("weather")) {
      const auto& w = s["weather"];
      if (w.is_string()) {
        sc.weather_preset = w.get<std::string>();
        if (!is_preset_name(sc.weather_preset)) {
          throw ConfigError("unknown weather preset '" + sc.weather_preset + "'");
        }
        sc.weather_override.reset();
      } else {
        sc.weather_override = weather_from_json(w);
        sc.weather_preset = w.value("name", std::string("custom"));
      }
    }
    if (s.contains("rig")) sc.rig = rig_from_json(s["rig"]);
  }
  if (j.contains("agent")) {
    const auto& a = j["agent"];
    check_keys(a, "agent", {"target", "timeout_ms", "retries"});
    read(a, "target", c.agent.target);
    read(a, "timeout_ms", c.agent.timeout_ms);
    read(a, "retries", c.agent.retries);
  }
  if (j.contains("decisions")) {
    check_keys(j["decisions"], "decisions", {"accel_step", "decel_step"});
    read(j["decisions"], "accel_step", c.decisions.accel_step);
    read(j["decisions"], "decel_step", c.decisions.decel_step);
  }
  if (j.contains("dynamics")) {
    const auto& d = j["dynamics"];
    check_keys(d, "dynamics", {"lane_change_duration", "idm"});
    read(d, "lane_change_duration", c.dynamics.lane_change_duration);
    if (d.contains("idm")) {
      const auto& i = d["idm"];
      check_keys(i, "idm", {"time_headway", "max_accel", "comfortable_decel", "min_gap", "exponent"});
      read(i, "time_headway", c.dynamics.idm.time_headway);
      read(i, "max_accel", c.dynamics.idm.max_accel);
      read(i, "comfortable_decel", c.dynamics.idm.comfortable_decel);
      read(i, "min_gap", c.dynamics.idm.min_gap);
      read(i, "exponent", c.dynamics.idm.exponent);
    }
  }
  if (j.contains("degradation")) {
    const auto& m = j["degradation"];
    check_keys(m, "degradation", {"camera_range", "camera_precip_loss", "lidar_range", "lidar_fog_loss",
                                  "dropout_per_precip", "noise_scale", "friction_wetness_loss",
                                  "friction_deposit_loss", "friction_floor"});
    read(m, "camera_range", c.degradation.camera_range);
    read(m, "camera_precip_loss", c.degradation.camera_precip_loss);
    read(m, "lidar_range", c.degradation.lidar_range);
    read(m, "lidar_fog_loss", c.degradation.lidar_fog_loss);
    read(m, "dropout_per_precip", c.degradation.dropout_per_precip);
    read(m, "noise_scale", c.degradation.noise_scale);
    read(m, "friction_wetness_loss", c.degradation.friction_wetness_loss);
    read(m, "friction_deposit_loss", c.degradation.friction_deposit_loss);
    read(m, "friction_floor", c.degradation.friction_floor);
  }
  if (j.contains("scoring")) c.scoring = scoring_from_json(j["scoring"]);
  read(j, "output", c.output);
  read(j, "log_level", c.log_level);
  return c;
}

// ---------------------------------------------------------------------------
// YAML text format

namespace detail {

inline nlohmann::json plain_scalar_to_json(const std::string& text) {
  if (text.empty() || text == "~" || text == "null") return nullptr;
  if (text == "true" || text == "True") return true;
  if (text == "false" || text == "False") return false;
  char* end = nullptr;
  const long long as_int = std::strtoll(text.c_str(), &end, 10);
  if (end != nullptr && *end == '\0') return as_int;
  const double as_double = std::strtod(text.c_str(), &end);
  if (end != nullptr && *end == '\0') return as_double;
  return text;
}

inline nlohmann::json yaml_scalar_to_json(const YAML::Node& node) {
  if (node.Tag() == "!") return node.Scalar();  // quoted
  return plain_scalar_to_json(node.Scalar());
}

inline nlohmann::json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Map: {
      nlohmann::json out = nlohmann::json::object();
      for (const auto& kv : node) out[kv.first.Scalar()] = yaml_to_json(kv.second);
      return out;
    }
    case YAML::NodeType::Sequence: {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& item : node) out.push_back(yaml_to_json(item));
      return out;
    }
    case YAML::NodeType::Scalar: return yaml_scalar_to_json(node);
    default: return nullptr;
  }
}

inline void emit_json(YAML::Emitter& out, const nlohmann::json& j) {
  if (j.is_object()) {
    out << YAML::BeginMap;
    for (const auto& [k, v] : j.items()) {
      out << YAML::Key << k << YAML::Value;
      emit_json(out, v);
    }
    out << YAML::EndMap;
  } else if (j.is_array()) {
    const bool flat = std::all_of(j.begin(), j.end(), [](const auto& v) { return v.is_primitive(); });
    out << (flat ? YAML::Flow : YAML::Block) << YAML::BeginSeq;
    for (const auto& v : j) emit_json(out, v);
    out << YAML::EndSeq;
  } else if (j.is_number_float()) {
    out << fmt::format("{}", j.get<double>());
  } else if (j.is_number_unsigned()) {
    out << j.get<std::uint64_t>();
  } else if (j.is_number_integer()) {
    out << j.get<std::int64_t>();
  } else if (j.is_boolean()) {
    out << j.get<bool>();
  } else if (j.is_null()) {
    out << YAML::Null;
  } else {
    const auto text = j.get<std::string>();
    if (!plain_scalar_to_json(text).is_string()) out << YAML::DoubleQuoted;
    out << text;
  }
}

}  // namespace detail

inline nlohmann::json load_yaml_as_json(const std::string& path) {
  try {
    return detail::yaml_to_json(YAML::LoadFile(path));
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot read '" + path + "': " + e.what());
  }
}

inline nlohmann::json parse_yaml_as_json(const std::string& text) {
  try {
    return detail::yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("bad config text: ") + e.what());
  }
}

inline std::string to_yaml(const nlohmann::json& j) {
  YAML::Emitter out;
  detail::emit_json(out, j);
  return std::string(out.c_str()) + "\n";
}

inline RunConfig load_run_config(const std::string& path) {
  RunConfig c = config_from_json(load_yaml_as_json(path));
  validate(c);
  return c;
}

}  // namespace wxdrive
