#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wxdrive/decision.hpp"
#include "wxdrive/error.hpp"
#include "wxdrive/scoring.hpp"

namespace wxdrive {

/// One line of the per-tick trajectory log.
struct LogRecord {
  std::int64_t tick = 0;
  double time = 0.0;
  int lane = 0;
  double s = 0.0;
  double speed = 0.0;
  double accel = 0.0;
  double lateral = 0.0;    // m from the left road edge
  double curvature = 0.0;  // 1/m at s
  double ttc = std::numeric_limits<double>::infinity();
  int npc_count = 0;  // surrounding vehicles within the sparse radius
  double avg_npc_speed = 0.0;
  bool sparse = true;
  bool speeding = false;
  std::optional<Decision> decision;

  bool operator==(const LogRecord&) const = default;
};

inline std::string encode_log_record(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["tick"] = r.tick;
  j["time"] = r.time;
  j["ego"] = nlohmann::ordered_json{{"lane", r.lane},       {"s", r.s},
                                    {"speed", r.speed},     {"accel", r.accel},
                                    {"lat", r.lateral},     {"curvature", r.curvature}};
  j["ttc"] = std::isfinite(r.ttc) ? nlohmann::ordered_json(r.ttc) : nlohmann::ordered_json(nullptr);
  j["npc_count"] = r.npc_count;
  j["avg_npc_speed"] = r.avg_npc_speed;
  j["sparse"] = r.sparse;
  j["speeding"] = r.speeding;
  if (r.decision) j["decision"] = std::string(to_string(*r.decision));
  return j.dump();
}

/// Parses one log line; `line_no` is used for error messages only.
inline LogRecord decode_log_record(const std::string& line, std::size_t line_no = 0) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("not a JSON object", line_no);
  try {
    LogRecord r;
    r.tick = j.at("tick").get<std::int64_t>();
    r.time = j.at("time").get<double>();
    const auto& ego = j.at("ego");
    r.lane = ego.at("lane").get<int>();
    r.s = ego.at("s").get<double>();
    r.speed = ego.at("speed").get<double>();
    r.accel = ego.at("accel").get<double>();
    r.lateral = ego.at("lat").get<double>();
    r.curvature = ego.at("curvature").get<double>();
    const auto& ttc = j.at("ttc");
    r.ttc = ttc.is_null() ? std::numeric_limits<double>::infinity() : ttc.get<double>();
    r.npc_count = j.at("npc_count").get<int>();
    r.avg_npc_speed = j.at("avg_npc_speed").get<double>();
    r.sparse = j.at("sparse").get<bool>();
    r.speeding = j.at("speeding").get<bool>();
    if (auto it = j.find("decision"); it != j.end()) {
      auto d = decision_from_string(it->get<std::string>());
      if (!d) throw ParseError("unknown decision '" + it->get<std::string>() + "'", line_no);
      r.decision = d;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad log record: ") + e.what(), line_no);
  }
}

inline void write_log(std::ostream& out, const std::vector<LogRecord>& records) {
  for (const auto& r : records) out << encode_log_record(r) << '\n';
}

/// Reads a whole log. Ticks must be consecutive; the first bad line is
/// reported by number.
inline std::vector<LogRecord> read_log(std::istream& in) {
  std::vector<LogRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LogRecord r = decode_log_record(line, line_no);
    if (!out.empty() && r.tick != out.back().tick + 1) throw ParseError("tick sequence broken", line_no);
    out.push_back(r);
  }
  if (out.empty()) throw ParseError("log is empty");
  return out;
}

inline std::vector<LogRecord> read_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open log '" + path + "'");
  return read_log(in);
}

/// Builds scoring frames from log records alone. Speeding is re-derived from
/// `v_limit`, kinematic derivatives from the sampled speed and lateral
/// position. Runs shorter than three ticks get zero derivatives.
inline std::vector<FrameRecord> frames_from_log(const std::vector<LogRecord>& log, const ScoringParams& p) {
  std::vector<FrameRecord> frames(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& r = log[i];
    auto& f = frames[i];
    f.tick = r.tick;
    f.ttc = r.ttc;
    f.speed = r.speed;
    f.avg_npc_speed = r.avg_npc_speed;
    f.sparse = r.sparse;
    f.speeding = r.speed > p.v_limit;
  }
  if (log.size() >= 3) {
    std::vector<double> speed, lateral, curvature;
    for (const auto& r : log) {
      speed.push_back(r.speed);
      lateral.push_back(r.lateral);
      curvature.push_back(r.curvature);
    }
    const double dt = (log.back().time - log.front().time) / static_cast<double>(log.back().tick - log.front().tick);
    const auto k = kinematic_derivatives(speed, lateral, curvature, dt);
    for (std::size_t i = 0; i < log.size(); ++i) {
      frames[i].accel = k.accel[i];
      frames[i].jerk = k.jerk[i];
      frames[i].lat_accel = k.lat_accel[i];
      frames[i].lat_jerk = k.lat_jerk[i];
    }
  }
  return frames;
}

inline RunScores score_log(const std::vector<LogRecord>& log, const ScoringParams& p) {
  return score_frames(frames_from_log(log, p), p);
}

}  // namespace wxdrive
