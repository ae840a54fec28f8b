#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wxdrive/error.hpp"
#include "wxdrive/road.hpp"

namespace wxdrive {

enum class DrivingStyle { Cautious, Normal, Aggressive };

inline const char* to_string(DrivingStyle s) {
  switch (s) {
    case DrivingStyle::Cautious: return "cautious";
    case DrivingStyle::Aggressive: return "aggressive";
    case DrivingStyle::Normal: break;
  }
  return "normal";
}

inline DrivingStyle driving_style_from_string(const std::string& name) {
  if (name == "cautious") return DrivingStyle::Cautious;
  if (name == "normal") return DrivingStyle::Normal;
  if (name == "aggressive") return DrivingStyle::Aggressive;
  throw ConfigError("unknown driving style '" + name + "'");
}

/// Reference magnitudes at or below which a comfort sub-score is 1.
struct ComfortLimits {
  double acc = 2.0;       // m/s^2
  double jerk = 2.0;      // m/s^3
  double lat_acc = 1.5;   // m/s^2
  double lat_jerk = 1.5;  // m/s^3

  ComfortLimits scaled(double k) const { return {acc * k, jerk * k, lat_acc * k, lat_jerk * k}; }
  bool operator==(const ComfortLimits&) const = default;
};

struct ComfortRefs {
  ComfortLimits cautious = ComfortLimits{}.scaled(0.5);
  ComfortLimits normal = ComfortLimits{};
  ComfortLimits aggressive = ComfortLimits{}.scaled(2.0);

  const ComfortLimits& for_style(DrivingStyle s) const {
    switch (s) {
      case DrivingStyle::Cautious: return cautious;
      case DrivingStyle::Aggressive: return aggressive;
      case DrivingStyle::Normal: break;
    }
    return normal;
  }

  bool operator==(const ComfortRefs&) const = default;
};

struct ScoringParams {
  double tau_th = 4.0;  // s
  DrivingStyle style = DrivingStyle::Normal;
  /// comfort, efficiency, safety
  std::array<double, 3> alpha{0.25, 0.25, 0.5};
  double v_limit = kDefaultSpeedLimit;
  double sparse_radius = 100.0;  // m
  ComfortRefs refs;

  bool operator==(const ScoringParams&) const = default;
};

inline void validate(const ScoringParams& p) {
  if (!(p.tau_th > 0.0)) throw ConfigError("tau_th must be > 0");
  if (!(p.v_limit > 0.0)) throw ConfigError("v_limit must be > 0");
  for (double a : p.alpha) {
    if (!(a >= 0.0)) throw ConfigError("alpha weights must be >= 0");
  }
  if (std::abs(p.alpha[0] + p.alpha[1] + p.alpha[2] - 1.0) > 1e-9) {
    throw ConfigError("alpha weights must sum to 1");
  }
  for (const ComfortLimits* l : {&p.refs.cautious, &p.refs.normal, &p.refs.aggressive}) {
    if (!(l->acc > 0.0 && l->jerk > 0.0 && l->lat_acc > 0.0 && l->lat_jerk > 0.0)) {
      throw ConfigError("comfort references must be > 0");
    }
  }
}

struct FrameRecord {
  std::int64_t tick = 0;
  double ttc = 0.0;            // s, may be +inf
  double speed = 0.0;          // m/s
  double avg_npc_speed = 0.0;  // m/s, meaningful unless sparse
  bool sparse = true;
  double accel = 0.0;
  double jerk = 0.0;
  double lat_accel = 0.0;
  double lat_jerk = 0.0;
  bool speeding = false;
};

inline double safety_score(double tau_e, double tau_th) {
  if (tau_e >= tau_th) return 1.0;
  return std::max(0.0, tau_e) / tau_th;
}

inline double comfort_subscore(double x, double ref) {
  const double mag = std::abs(x);
  return mag <= ref ? 1.0 : ref / mag;
}

inline double comfort_score(const FrameRecord& f, const ComfortRefs& refs, DrivingStyle style) {
  const ComfortLimits& l = refs.for_style(style);
  return (comfort_subscore(f.accel, l.acc) + comfort_subscore(f.jerk, l.jerk) +
          comfort_subscore(f.lat_accel, l.lat_acc) + comfort_subscore(f.lat_jerk, l.lat_jerk)) /
         4.0;
}

/// A non-positive target (stationary traffic) counts as fully efficient.
inline double efficiency_score(double v_e, double v_star) {
  if (!(v_star > 0.0) || v_e >= v_star) return 1.0;
  return std::max(0.0, v_e) / v_star;
}

inline double target_speed(double v_avg, bool sparse, double v_limit) {
  return sparse ? v_limit : std::min(v_avg, v_limit);
}

inline double speed_score(std::int64_t n_speeding, std::int64_t n_total) {
  if (n_total <= 0) throw ConfigError("speed_score needs at least one frame");
  if (n_speeding < 0 || n_speeding > n_total) throw ConfigError("speeding count out of range");
  return std::pow(0.9, 10.0 * static_cast<double>(n_speeding) / static_cast<double>(n_total));
}

struct KinematicSeries {
  std::vector<double> accel, jerk, lat_accel, lat_jerk;
};

namespace detail {

/// Central differences inside, one-sided at both ends.
inline std::vector<double> first_difference(std::span<const double> x, double dt) {
  const std::size_t n = x.size();
  std::vector<double> d(n);
  d[0] = (x[1] - x[0]) / dt;
  d[n - 1] = (x[n - 1] - x[n - 2]) / dt;
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
  return d;
}

/// Three-point second difference; end values repeat their neighbours.
inline std::vector<double> second_difference(std::span<const double> x, double dt) {
  const std::size_t n = x.size();
  std::vector<double> d(n);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / (dt * dt);
  d[0] = d[1];
  d[n - 1] = d[n - 2];
  return d;
}

}  // namespace detail

/// Longitudinal and lateral derivatives of a sampled trajectory.
/// `curvature` may be empty (straight road) or match `speed` in length.
inline KinematicSeries kinematic_derivatives(std::span<const double> speed, std::span<const double> lateral,
                                             std::span<const double> curvature, double dt) {
  if (speed.size() < 3) throw ConfigError("kinematic series needs at least 3 samples");
  if (lateral.size() != speed.size() || (!curvature.empty() && curvature.size() != speed.size())) {
    throw ConfigError("kinematic series lengths differ");
  }
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  KinematicSeries k;
  k.accel = detail::first_difference(speed, dt);
  k.jerk = detail::first_difference(k.accel, dt);
  k.lat_accel = detail::second_difference(lateral, dt);
  if (!curvature.empty()) {
    for (std::size_t i = 0; i < speed.size(); ++i) k.lat_accel[i] += speed[i] * speed[i] * curvature[i];
  }
  k.lat_jerk = detail::first_difference(k.lat_accel, dt);
  return k;
}

struct CdfPoint {
  double value = 0.0;
  double fraction = 0.0;
  bool operator==(const CdfPoint&) const = default;
};

using Cdf = std::vector<CdfPoint>;

/// Empirical CDF as (distinct value, fraction of samples <= value).
inline Cdf build_cdf(std::vector<double> samples) {
  if (samples.empty()) throw ConfigError("cannot build a CDF from no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  Cdf cdf;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    cdf.push_back({samples[i], static_cast<double>(i + 1) / n});
  }
  return cdf;
}

/// F(x) for a CDF table; 0 below the smallest value.
inline double evaluate_cdf(const Cdf& cdf, double x) {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), x,
                             [](double v, const CdfPoint& p) { return v < p.value; });
  return it == cdf.begin() ? 0.0 : std::prev(it)->fraction;
}

inline constexpr std::array<const char*, 3> kMetricNames{"safety", "comfort", "efficiency"};

struct RunScores {
  std::vector<double> safety, comfort, efficiency;
  double speed_score = 1.0;
  std::map<std::string, Cdf> cdfs;
  double aggregate = 0.0;
  std::array<double, 3> alpha{0.25, 0.25, 0.5};

  bool operator==(const RunScores&) const = default;
};

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Weighted per-frame means scaled by the speed penalty.
inline double aggregate(const RunScores& r) {
  return (r.alpha[0] * mean(r.comfort) + r.alpha[1] * mean(r.efficiency) + r.alpha[2] * mean(r.safety)) *
         r.speed_score;
}

/// Scores a sequence of frames whose kinematic fields are already filled.
inline RunScores score_frames(const std::vector<FrameRecord>& frames, const ScoringParams& p) {
  if (frames.empty()) throw ConfigError("cannot score an empty run");
  RunScores r;
  r.alpha = p.alpha;
  std::int64_t speeding = 0;
  for (const auto& f : frames) {
    r.safety.push_back(safety_score(f.ttc, p.tau_th));
    r.comfort.push_back(comfort_score(f, p.refs, p.style));
    r.efficiency.push_back(efficiency_score(f.speed, target_speed(f.avg_npc_speed, f.sparse, p.v_limit)));
    if (f.speeding) ++speeding;
  }
  r.speed_score = speed_score(speeding, static_cast<std::int64_t>(frames.size()));
  r.cdfs["safety"] = build_cdf(r.safety);
  r.cdfs["comfort"] = build_cdf(r.comfort);
  r.cdfs["efficiency"] = build_cdf(r.efficiency);
  r.aggregate = aggregate(r);
  return r;
}

}  // namespace wxdrive
