#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace wxdrive {

/// The closed five-value action space offered to driving agents.
enum class Decision { Idle, Accelerate, Decelerate, TurnLeft, TurnRight };

inline constexpr std::array<Decision, 5> kAllDecisions{
    Decision::Idle, Decision::Accelerate, Decision::Decelerate, Decision::TurnLeft,
    Decision::TurnRight};

inline constexpr std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Idle: return "idle";
    case Decision::Accelerate: return "accelerate";
    case Decision::Decelerate: return "decelerate";
    case Decision::TurnLeft: return "turn_left";
    case Decision::TurnRight: return "turn_right";
  }
  return "idle";
}

/// Exact (lower-case) keyword lookup.
inline std::optional<Decision> decision_from_string(std::string_view name) {
  for (Decision d : kAllDecisions) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

}  // namespace wxdrive
