#pragma once

#include <cctype>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wxdrive/decision.hpp"
#include "wxdrive/error.hpp"
#include "wxdrive/perception.hpp"

namespace wxdrive {

// ---------------------------------------------------------------------------
// Decision text parsing

/// Extracts a decision from free-form model output. A `DECISION: <value>`
/// marker (any case, last valid one wins) takes precedence; otherwise the
/// text must mention exactly one distinct decision keyword.
inline Decision parse_decision(std::string_view text) {
  std::string lower(text.size(), '\0');
  for (std::size_t i = 0; i < text.size(); ++i) {
    lower[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
  }
  auto is_word = [](char c) { return (c >= 'a' && c <= 'z') || c == '_'; };

  struct Word {
    std::size_t begin, end;
  };
  std::vector<Word> words;
  for (std::size_t i = 0; i < lower.size();) {
    if (!is_word(lower[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < lower.size() && is_word(lower[j])) ++j;
    words.push_back({i, j});
    i = j;
  }
  auto word_at = [&](std::size_t k) {
    return std::string_view(lower).substr(words[k].begin, words[k].end - words[k].begin);
  };

  std::optional<Decision> marked;
  for (std::size_t k = 0; k + 1 < words.size(); ++k) {
    if (word_at(k) != "decision") continue;
    std::size_t pos = words[k].end;
    while (pos < lower.size() && (lower[pos] == ' ' || lower[pos] == '\t')) ++pos;
    if (pos >= lower.size() || lower[pos] != ':') continue;
    ++pos;
    while (pos < lower.size() && std::isspace(static_cast<unsigned char>(lower[pos]))) ++pos;
    if (pos != words[k + 1].begin) continue;
    if (auto d = decision_from_string(word_at(k + 1))) marked = d;
  }
  if (marked) return *marked;

  std::optional<Decision> found;
  for (std::size_t k = 0; k < words.size(); ++k) {
    auto d = decision_from_string(word_at(k));
    if (!d) continue;
    if (found && *found != *d) throw ParseError("ambiguous reply: several decision keywords");
    found = d;
  }
  if (!found) throw ParseError("reply contains no decision keyword");
  return *found;
}

/// Canonical agent answer for a decision.
inline std::string render_decision(Decision d) { return "DECISION: " + std::string(to_string(d)); }

// ---------------------------------------------------------------------------
// Memory and reflection

enum class MemoryStatus { AcceptedImmediately, AcceptedAfterReflection };

inline const char* to_string(MemoryStatus s) {
  return s == MemoryStatus::AcceptedImmediately ? "accepted_immediately" : "accepted_after_reflection";
}

inline constexpr double kGoodDecisionThreshold = 0.8;
inline constexpr std::size_t kMaxHistory = 8;

struct MemoryEntry {
  std::uint64_t scene_fingerprint = 0;
  std::int64_t frame = 0;
  Decision decision = Decision::Idle;
  double frame_score = 0.0;
  MemoryStatus status = MemoryStatus::AcceptedImmediately;
  std::optional<std::string> reflection_note;

  bool operator==(const MemoryEntry&) const = default;
};

/// Outcome of one decision, evaluated after its decision period elapsed.
struct MemoryCandidate {
  std::uint64_t scene_fingerprint = 0;
  std::int64_t frame = 0;
  Decision decision = Decision::Idle;
  double frame_score = 0.0;
  std::string outcome_summary;
};

/// Append-only decision memory of one run.
class MemoryStore {
 public:
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  void append(MemoryEntry e) { entries_.push_back(std::move(e)); }

  /// The most recent `k` entries, oldest first.
  std::vector<MemoryEntry> recent(std::size_t k = kMaxHistory) const {
    const std::size_t n = std::min(k, entries_.size());
    return {entries_.end() - static_cast<std::ptrdiff_t>(n), entries_.end()};
  }

  bool operator==(const MemoryStore&) const = default;

 private:
  std::vector<MemoryEntry> entries_;
};

inline void memory_update(MemoryStore& store, const MemoryCandidate& c,
                          double good_threshold = kGoodDecisionThreshold) {
  MemoryEntry e;
  e.scene_fingerprint = c.scene_fingerprint;
  e.frame = c.frame;
  e.decision = c.decision;
  e.frame_score = c.frame_score;
  if (c.frame_score >= good_threshold) {
    e.status = MemoryStatus::AcceptedImmediately;
  } else {
    e.status = MemoryStatus::AcceptedAfterReflection;
    e.reflection_note = "poor outcome for '" + std::string(to_string(c.decision)) + "' at frame " +
                        std::to_string(c.frame) + ": " + c.outcome_summary;
  }
  store.append(std::move(e));
}

/// 64-bit FNV-1a; stable across platforms so fingerprints can be logged.
inline std::uint64_t fingerprint(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Request / response records

struct AgentRequest {
  std::int64_t frame = 0;
  ScenePrompt prompt;
  std::optional<LidarSummary> lidar;
  std::vector<MemoryEntry> history;  // at most kMaxHistory, oldest first
};

struct AgentResponse {
  Decision decision = Decision::Idle;
  std::string rationale;
  double latency_ms = 0.0;
  bool fallback = false;
};

inline AgentResponse fallback_response() {
  return {Decision::Decelerate, "fallback", 0.0, true};
}

inline nlohmann::json to_json(const LidarSummary& l) {
  nlohmann::json j{{"num_points", l.num_points}};
  j["mean_distance"] = l.mean_distance ? nlohmann::json(*l.mean_distance) : nlohmann::json(nullptr);
  j["min_distance"] = l.min_distance ? nlohmann::json(*l.min_distance) : nlohmann::json(nullptr);
  j["max_distance"] = l.max_distance ? nlohmann::json(*l.max_distance) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const MemoryEntry& e) {
  nlohmann::json j{{"frame", e.frame},
                   {"decision", std::string(to_string(e.decision))},
                   {"score", e.frame_score},
                   {"status", to_string(e.status)},
                   {"fingerprint", e.scene_fingerprint}};
  j["note"] = e.reflection_note ? nlohmann::json(*e.reflection_note) : nlohmann::json(nullptr);
  return j;
}

inline MemoryEntry memory_entry_from_json(const nlohmann::json& j) {
  try {
    MemoryEntry e;
    e.frame = j.at("frame").get<std::int64_t>();
    auto d = decision_from_string(j.at("decision").get<std::string>());
    if (!d) throw ParseError("unknown decision in memory entry");
    e.decision = *d;
    e.frame_score = j.at("score").get<double>();
    const auto status = j.at("status").get<std::string>();
    if (status == "accepted_immediately") {
      e.status = MemoryStatus::AcceptedImmediately;
    } else if (status == "accepted_after_reflection") {
      e.status = MemoryStatus::AcceptedAfterReflection;
    } else {
      throw ParseError("unknown memory status '" + status + "'");
    }
    e.scene_fingerprint = j.at("fingerprint").get<std::uint64_t>();
    if (!j.at("note").is_null()) e.reflection_note = j.at("note").get<std::string>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("memory entry: ") + ex.what());
  }
}

/// One request record, without the trailing newline.
inline std::string encode_request(const AgentRequest& req) {
  nlohmann::json j{{"type", "decision_request"},
                   {"frame", req.frame},
                   {"system", req.prompt.system_text},
                   {"scene", req.prompt.scene_text},
                   {"task", req.prompt.task_text}};
  j["lidar"] = req.lidar ? to_json(*req.lidar) : nlohmann::json(nullptr);
  j["history"] = nlohmann::json::array();
  for (const auto& e : req.history) j["history"].push_back(to_json(e));
  // Replace invalid UTF-8 rather than throw on odd model text fed back via notes.
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

/// Text payload of a `{"type":"decision","text":...}` record.
inline std::string decode_response_text(std::string_view line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("reply is not a JSON object");
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string() || type->get<std::string>() != "decision") {
    throw ParseError("reply type is not 'decision'");
  }
  const auto text = j.find("text");
  if (text == j.end() || !text->is_string()) throw ParseError("reply has no text field");
  return text->get<std::string>();
}

inline std::string encode_response(std::string_view text) {
  return nlohmann::json{{"type", "decision"}, {"text", text}}.dump(
      -1, ' ', false, nlohmann::json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// Built-in policies

using Policy = std::function<Decision(const Observation&)>;

struct BaselineParams {
  double ttc_threshold = 4.0;  // s
  std::optional<double> target_speed;  // defaults to the speed limit
  double speed_margin = 2.0;   // accelerate only below target - margin
  double clear_ahead = 40.0;   // m
  double clear_behind = 15.0;  // m, for the target lane of a lane change
};

namespace detail {

inline const Detection* lead_in_lane(const Observation& obs, int lane) {
  const Detection* lead = nullptr;
  for (const auto& d : obs.detected) {
    if (d.sector != Sector::Front || d.lane_index != lane) continue;
    if (lead == nullptr || d.gap < lead->gap) lead = &d;
  }
  return lead;
}

inline double detection_ttc(const Detection* d) {
  if (d == nullptr || !(d->relative_speed < 0.0)) return std::numeric_limits<double>::infinity();
  return d->gap / -d->relative_speed;
}

inline bool lane_clear(const Observation& obs, int lane, double ahead, double behind) {
  if (lane < 0 || lane >= obs.lane_count) return false;
  for (const auto& d : obs.detected) {
    if (d.lane_index != lane) continue;
    if (d.gap < (d.sector == Sector::Front ? ahead : behind)) return false;
  }
  return true;
}

}  // namespace detail

/// Rule-based reference driver.
inline Decision baseline_agent(const Observation& obs, const BaselineParams& p = {}) {
  const double target = p.target_speed.value_or(obs.speed_limit);
  const int lane = obs.ego.lane_index;
  const Detection* lead = detail::lead_in_lane(obs, lane);
  if (detail::detection_ttc(lead) < p.ttc_threshold) return Decision::Decelerate;
  if (obs.ego.speed > target + 0.5) return Decision::Decelerate;

  const bool wants_speed = obs.ego.speed < target - p.speed_margin;
  const bool blocked = lead != nullptr && lead->gap < p.clear_ahead;
  if (wants_speed && !blocked) return Decision::Accelerate;
  if (wants_speed && blocked) {
    if (detail::lane_clear(obs, lane - 1, p.clear_ahead, p.clear_behind)) return Decision::TurnLeft;
    if (detail::lane_clear(obs, lane + 1, p.clear_ahead, p.clear_behind)) return Decision::TurnRight;
  }
  return Decision::Idle;
}

/// Scripted slow driver: settles around `cruise` m/s, never changes lane.
inline Decision cautious_policy(const Observation& obs, double cruise = 8.0) {
  const Detection* lead = detail::lead_in_lane(obs, obs.ego.lane_index);
  if (detail::detection_ttc(lead) < 6.0) return Decision::Decelerate;
  if (obs.ego.speed > cruise + 1.0) return Decision::Decelerate;
  if (obs.ego.speed < cruise - 2.0) return Decision::Accelerate;
  return Decision::Idle;
}

/// Scripted fast driver: pushes to `cruise` m/s regardless of the limit and
/// weaves around slower traffic instead of braking.
inline Decision aggressive_policy(const Observation& obs, double cruise = 20.0) {
  const int lane = obs.ego.lane_index;
  const Detection* lead = detail::lead_in_lane(obs, lane);
  if (detail::detection_ttc(lead) < 1.0) return Decision::Decelerate;
  if (lead != nullptr && lead->gap < 25.0) {
    if (detail::lane_clear(obs, lane - 1, 8.0, 0.0)) return Decision::TurnLeft;
    if (detail::lane_clear(obs, lane + 1, 8.0, 0.0)) return Decision::TurnRight;
  }
  if (obs.ego.speed < cruise) return Decision::Accelerate;
  return Decision::Idle;
}

}  // namespace wxdrive
