#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "wxdrive/error.hpp"

namespace wxdrive {

inline constexpr double kGravity = 9.81;
/// 50 km/h.
inline constexpr double kDefaultSpeedLimit = 13.89;

enum class SegmentKind { Straight, Arc };

struct Segment {
  SegmentKind kind = SegmentKind::Straight;
  double length = 0.0;     // m
  // 1/m; positive bends toward increasing lateral coordinate (rightwards).
  // Always 0 for Straight.
  double curvature = 0.0;

  /// Heading change accumulated along the segment, rad.
  double heading_change() const { return length * curvature; }
};

/// Input to build_road. Mirrors the `road` block of the scenario config.
struct RoadSpec {
  std::vector<Segment> segments{{SegmentKind::Straight, 300.0, 0.0},
                                {SegmentKind::Arc, 200.0, 0.005}};
  int lane_count = 4;
  double lane_width = 3.5;
  double speed_limit = kDefaultSpeedLimit;
};

/// Multilane one-direction highway. Lane 0 is the leftmost lane; all lanes
/// share the reference line, so arc length `s` is lane independent.
class RoadNetwork {
 public:
  RoadNetwork() = default;

  const std::vector<Segment>& segments() const { return segments_; }
  int lane_count() const { return lane_count_; }
  double lane_width() const { return lane_width_; }
  double speed_limit() const { return speed_limit_; }
  double total_length() const { return total_length_; }

  /// Curvature of the segment containing `s`; past either end the nearest
  /// segment is used.
  double curvature_at(double s) const {
    double start = 0.0;
    for (const auto& seg : segments_) {
      if (s < start + seg.length) return seg.curvature;
      start += seg.length;
    }
    return segments_.empty() ? 0.0 : segments_.back().curvature;
  }

  /// Lateral coordinate of a lane center, measured rightwards from the left
  /// road edge.
  double lane_center(int lane) const { return (lane + 0.5) * lane_width_; }

  bool valid_lane(int lane) const { return lane >= 0 && lane < lane_count_; }

 private:
  friend RoadNetwork build_road(const RoadSpec& spec);

  std::vector<Segment> segments_;
  int lane_count_ = 0;
  double lane_width_ = 0.0;
  double speed_limit_ = 0.0;
  double total_length_ = 0.0;
};

inline RoadNetwork build_road(const RoadSpec& spec) {
  if (spec.segments.empty()) throw ConfigError("road has no segments");
  if (spec.lane_count < 2) throw ConfigError("lane_count must be >= 2");
  if (!(spec.lane_width > 0.0)) throw ConfigError("lane_width must be > 0");
  if (!(spec.speed_limit > 0.0)) throw ConfigError("speed_limit must be > 0");
  RoadNetwork road;
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    Segment seg = spec.segments[i];
    if (!(seg.length > 0.0)) {
      throw ConfigError("segment " + std::to_string(i) + " has non-positive length");
    }
    if (seg.kind == SegmentKind::Straight) seg.curvature = 0.0;
    road.segments_.push_back(seg);
  }
  road.lane_count_ = spec.lane_count;
  road.lane_width_ = spec.lane_width;
  road.speed_limit_ = spec.speed_limit;
  road.total_length_ = std::accumulate(road.segments_.begin(), road.segments_.end(), 0.0,
                                       [](double acc, const Segment& s) { return acc + s.length; });
  return road;
}

inline const char* to_string(SegmentKind kind) {
  return kind == SegmentKind::Arc ? "arc" : "straight";
}

inline SegmentKind segment_kind_from_string(const std::string& name) {
  if (name == "straight") return SegmentKind::Straight;
  if (name == "arc") return SegmentKind::Arc;
  throw ConfigError("unknown segment type '" + name + "'");
}

}  // namespace wxdrive
