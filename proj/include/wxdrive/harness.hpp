#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "wxdrive/agent.hpp"
#include "wxdrive/channel.hpp"
#include "wxdrive/config.hpp"
#include "wxdrive/perception.hpp"
#include "wxdrive/scoring.hpp"
#include "wxdrive/traffic.hpp"
#include "wxdrive/trajectory_log.hpp"
#include "wxdrive/weather.hpp"

namespace wxdrive {

enum class RunStatus { GoalReached, Timeout, Collision, AgentFailure };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::GoalReached: return "goal_reached";
    case RunStatus::Timeout: return "timeout";
    case RunStatus::Collision: return "collision";
    case RunStatus::AgentFailure: return "agent_failure";
  }
  return "timeout";
}

/// Process exit code for a finished run.
inline int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::GoalReached: return 0;
    case RunStatus::Timeout: return 2;
    case RunStatus::Collision: return 3;
    case RunStatus::AgentFailure: return 4;
  }
  return 1;
}

struct RunResult {
  std::vector<LogRecord> log;
  RunScores scores;
  RunStatus status = RunStatus::Timeout;
  MemoryStore memory;
  int decisions = 0;
  int fallbacks = 0;
  std::string failure;  // transport error text for AgentFailure
  nlohmann::ordered_json report;
};

// ---------------------------------------------------------------------------
// Per-tick log records and decision outcomes

inline LogRecord make_log_record(const WorldState& world, const RoadNetwork& road, const ScoringParams& p) {
  const VehicleState& ego = world.ego();
  LogRecord r;
  r.tick = world.tick;
  r.time = world.time;
  r.lane = ego.lane_index;
  r.s = ego.s;
  r.speed = ego.speed;
  r.accel = ego.accel;
  r.lateral = lateral_position(ego, road);
  r.curvature = road.curvature_at(ego.s);
  r.ttc = ttc(world);
  double speed_sum = 0.0;
  for (const auto& v : world.vehicles) {
    if (v.is_ego || std::abs(v.s - ego.s) > p.sparse_radius) continue;
    ++r.npc_count;
    speed_sum += v.speed;
  }
  r.sparse = r.npc_count == 0;
  r.avg_npc_speed = r.sparse ? 0.0 : speed_sum / r.npc_count;
  r.speeding = ego.speed > p.v_limit;
  return r;
}

/// Scores the log slice [from, to] that followed the decision taken at
/// `from`, as the candidate for the decision memory.
inline MemoryCandidate evaluate_decision(const std::vector<LogRecord>& log, std::size_t from, std::size_t to,
                                         std::uint64_t scene_fingerprint, const ScoringParams& p) {
  const std::vector<LogRecord> slice(log.begin() + static_cast<std::ptrdiff_t>(from),
                                     log.begin() + static_cast<std::ptrdiff_t>(to) + 1);
  const RunScores s = score_log(slice, p);
  double min_ttc = std::numeric_limits<double>::infinity();
  for (const auto& r : slice) min_ttc = std::min(min_ttc, r.ttc);
  MemoryCandidate c;
  c.scene_fingerprint = scene_fingerprint;
  c.frame = log[from].tick;
  c.decision = log[from].decision.value_or(Decision::Idle);
  c.frame_score = s.aggregate;
  c.outcome_summary = fmt::format(
      "over ticks {}-{} safety {:.2f}, comfort {:.2f}, efficiency {:.2f}, speed penalty {:.2f}, "
      "min ttc {}",
      log[from].tick, log[to].tick, mean(s.safety), mean(s.comfort), mean(s.efficiency), s.speed_score,
      std::isfinite(min_ttc) ? fmt::format("{:.1f} s", min_ttc) : std::string("none"));
  return c;
}

/// Rebuilds the decision memory of a run from its trajectory log and the
/// scene fingerprints recorded in its case log (one per decision, in order).
inline MemoryStore rebuild_memory(const std::vector<LogRecord>& log, const std::vector<std::uint64_t>& fingerprints,
                                  const ScoringParams& p) {
  std::vector<std::size_t> decision_rows;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].decision) decision_rows.push_back(i);
  }
  MemoryStore store;
  std::size_t k = 0;
  for (std::size_t d = 0; d < decision_rows.size(); ++d) {
    const std::size_t from = decision_rows[d];
    const std::size_t to = d + 1 < decision_rows.size() ? decision_rows[d + 1] : log.size() - 1;
    if (to <= from) break;
    if (k >= fingerprints.size()) throw ParseError("case log has fewer entries than decisions");
    memory_update(store, evaluate_decision(log, from, to, fingerprints[k++], p));
  }
  return store;
}

inline std::vector<MemoryEntry> read_memory_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case log '" + path + "'");
  std::vector<MemoryEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("not a JSON object", line_no);
    out.push_back(memory_entry_from_json(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::ordered_json scores_to_json(const RunScores& s) {
  nlohmann::ordered_json j;
  j["speed_score"] = s.speed_score;
  j["aggregate"] = s.aggregate;
  j["means"] = {{"safety", mean(s.safety)}, {"comfort", mean(s.comfort)}, {"efficiency", mean(s.efficiency)}};
  j["frames"] = {{"safety", s.safety}, {"comfort", s.comfort}, {"efficiency", s.efficiency}};
  nlohmann::ordered_json cdfs;
  for (const char* name : kMetricNames) {
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    for (const auto& p : s.cdfs.at(name)) table.push_back({p.value, p.fraction});
    cdfs[name] = table;
  }
  j["cdfs"] = cdfs;
  j["cdf_unit"] = "per-frame scores of a single run";
  return j;
}

inline nlohmann::ordered_json build_report(const nlohmann::json& config, const nlohmann::ordered_json& run,
                                           const ScoringParams& params, const RunScores& scores) {
  nlohmann::ordered_json j;
  j["format"] = "wxdrive-report/1";
  j["config"] = config;
  j["run"] = run;
  j["params"] = scoring_to_json(params);
  j["scores"] = scores_to_json(scores);
  return j;
}

inline std::string cdf_csv(const Cdf& cdf) {
  std::string out = "value,fraction\n";
  for (const auto& p : cdf) out += fmt::format("{},{}\n", p.value, p.fraction);
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string report_text(const nlohmann::ordered_json& report) { return report.dump(2) + "\n"; }

/// Writes report.json and cdf_<metric>.csv into `dir`.
inline void write_report_files(const std::filesystem::path& dir, const nlohmann::ordered_json& report,
                               const RunScores& scores) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_text(report));
  for (const char* name : kMetricNames) {
    write_text(dir / (std::string("cdf_") + name + ".csv"), cdf_csv(scores.cdfs.at(name)));
  }
}

inline nlohmann::ordered_json read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open report '" + path + "'");
  auto j = nlohmann::ordered_json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("scores") || !j.contains("params")) {
    throw ParseError("'" + path + "' is not a score report");
  }
  return j;
}

// ---------------------------------------------------------------------------
// Closed loop

/// Runs one scenario: observe -> prompt -> decide -> act -> score. When
/// `agent` is null it is built from `cfg.agent`. Output files are written
/// to `cfg.output` unless `write_files` is false.
inline RunResult run_scenario(const RunConfig& cfg, Agent* agent = nullptr, bool write_files = true) {
  validate(cfg);
  const Scenario& sc = cfg.scenario;
  const ScoringParams& params = cfg.scoring;
  std::unique_ptr<Agent> owned;
  if (agent == nullptr) {
    owned = make_agent(cfg.agent.target, std::chrono::milliseconds(cfg.agent.timeout_ms), cfg.agent.retries);
    agent = owned.get();
  }

  const RoadNetwork road = build_road(sc.road);
  const WeatherConfig weather = sc.weather();
  const WeatherEffects fx = effects(weather, cfg.degradation);
  WorldState world = spawn_traffic(sc);
  EgoControl control = initial_control(world.ego());

  RunResult result;
  std::optional<std::size_t> pending_row;
  std::uint64_t pending_fingerprint = 0;
  auto settle_pending = [&](std::size_t upto) {
    if (!pending_row || upto <= *pending_row) return;
    memory_update(result.memory, evaluate_decision(result.log, *pending_row, upto, pending_fingerprint, params));
    pending_row.reset();
  };

  for (;;) {
    result.log.push_back(make_log_record(world, road, params));
    const std::size_t row = result.log.size() - 1;
    if (world.ego_collided()) {
      result.status = RunStatus::Collision;
      break;
    }
    if (world.ego().s >= sc.route_goal) {
      result.status = RunStatus::GoalReached;
      break;
    }
    if (world.tick >= sc.max_ticks) {
      result.status = RunStatus::Timeout;
      break;
    }
    if (world.tick % sc.decision_period == 0) {
      settle_pending(row);
      const Observation obs = observe(world, road, sc.rig, fx, sc.seed, sc.weather_preset);
      AgentRequest req;
      req.frame = world.tick;
      req.prompt = render_prompt(obs, sc.route_goal - world.ego().s);
      req.lidar = obs.lidar;
      req.history = result.memory.recent(kMaxHistory);
      AgentResponse resp;
      try {
        resp = agent->decide(req, obs);
      } catch (const TransportError& e) {
        spdlog::error("tick {}: agent transport failed: {}", world.tick, e.what());
        result.status = RunStatus::AgentFailure;
        result.failure = e.what();
        break;
      }
      ++result.decisions;
      if (resp.fallback) ++result.fallbacks;
      result.log[row].decision = resp.decision;
      control = apply_decision(resp.decision, world.ego(), road, control, cfg.decisions);
      pending_row = row;
      pending_fingerprint = fingerprint(req.prompt.scene_text);
    }
    world = step(world, road, control, fx.friction, sc.dt, cfg.dynamics);
  }
  settle_pending(result.log.size() - 1);

  result.scores = score_log(result.log, params);
  nlohmann::ordered_json run;
  run["status"] = to_string(result.status);
  run["weather"] = sc.weather_preset;
  run["weather_config"] = weather_to_json(weather);
  run["rig"] = rig_to_json(sc.rig);
  run["rig_label"] = sc.rig.label();
  run["seed"] = sc.seed;
  run["agent"] = agent->describe();
  run["ticks"] = result.log.back().tick;
  run["distance"] = result.log.back().s - sc.route_start;
  run["decisions"] = result.decisions;
  run["fallbacks"] = result.fallbacks;
  run["fallback_rate"] = result.decisions > 0 ? static_cast<double>(result.fallbacks) / result.decisions : 0.0;
  run["memory_entries"] = result.memory.size();
  run["partial"] = result.status == RunStatus::AgentFailure;
  if (!result.failure.empty()) run["failure"] = result.failure;
  result.report = build_report(config_to_json(cfg), run, params, result.scores);

  if (write_files) {
    const std::filesystem::path dir(cfg.output);
    std::filesystem::create_directories(dir);
    std::ostringstream log_text;
    write_log(log_text, result.log);
    write_text(dir / "trajectory.jsonl", log_text.str());
    std::string mem;
    for (const auto& e : result.memory.entries()) mem += to_json(e).dump() + "\n";
    write_text(dir / "memory.jsonl", mem);
    write_report_files(dir, result.report, result.scores);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Rescoring

inline RunScores rescore(const std::string& log_path, const ScoringParams& params) {
  validate(params);
  return score_log(read_log_file(log_path), params);
}

/// Re-derives a report from its trajectory log. The config and run blocks
/// are carried over from `original`; params and scores are recomputed.
inline nlohmann::ordered_json rescore_report(const std::vector<LogRecord>& log,
                                             const nlohmann::ordered_json& original, const ScoringParams& params) {
  validate(params);
  const RunScores scores = score_log(log, params);
  return build_report(original.at("config"), original.at("run"), params, scores);
}

inline ScoringParams params_of_report(const nlohmann::ordered_json& report) {
  return scoring_from_json(nlohmann::json::parse(report.at("params").dump()));
}

// ---------------------------------------------------------------------------
// Batches

struct NamedRig {
  std::string name;
  SensorRig rig;
};

/// The four camera/LiDAR combinations of the sensor ablation.
inline std::vector<NamedRig> standard_rigs() {
  return {{"3cam", {3, 0, false}}, {"6cam", {3, 3, false}}, {"3cam+lidar", {3, 0, true}}, {"6cam+lidar", {3, 3, true}}};
}

struct BatchSpec {
  RunConfig base;
  std::vector<std::string> presets;
  std::vector<NamedRig> rigs;
  std::vector<std::uint64_t> seeds;
  std::string output = "runs/batch";
  int workers = 1;
};

inline void validate(const BatchSpec& b) {
  if (b.presets.empty()) throw ConfigError("batch needs at least one weather preset");
  if (b.rigs.empty()) throw ConfigError("batch needs at least one sensor rig");
  if (b.seeds.empty()) throw ConfigError("batch needs at least one seed");
  for (const auto& p : b.presets) {
    if (!is_preset_name(p)) throw ConfigError("unknown weather preset '" + p + "'");
  }
  if (b.workers < 1) throw ConfigError("workers must be >= 1");
}

inline BatchSpec batch_from_json(const nlohmann::json& j) {
  detail::check_keys(j, "batch", {"base", "presets", "rigs", "seeds", "output", "workers"});
  BatchSpec b;
  if (j.contains("base")) b.base = config_from_json(j["base"]);
  detail::read(j, "presets", b.presets);
  if (j.contains("rigs")) {
    for (const auto& r : j["rigs"]) b.rigs.push_back({r.value("name", rig_from_json(r).label()), rig_from_json(r)});
  } else {
    b.rigs = standard_rigs();
  }
  if (j.contains("seeds")) {
    detail::read(j, "seeds", b.seeds);
  } else {
    b.seeds = {b.base.scenario.seed};
  }
  detail::read(j, "output", b.output);
  detail::read(j, "workers", b.workers);
  return b;
}

struct BatchCell {
  std::string preset;
  std::string rig;
  std::uint64_t seed = 0;
  std::string report;  // path, empty on failure
  std::string status;
  std::string error;
};

inline std::string cell_name(const std::string& preset, const std::string& rig, std::uint64_t seed) {
  return fmt::format("{}__{}__s{}", preset, rig, seed);
}

struct ComparisonRow {
  std::string name;
  std::array<double, 3> mean{}, median{};
  double speed_score = 0.0;
  double aggregate = 0.0;
};

struct ComparisonPair {
  std::size_t a = 0, b = 0;
  std::string metric;
  /// Fraction of evaluation points where F_a < F_b, i.e. where `a` puts
  /// more mass on higher (better) scores.
  double dominance = 0.0;
  double mean_difference = 0.0;  // mean_a - mean_b
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::vector<ComparisonPair> pairs;
};

inline ComparisonTable compare(const std::vector<nlohmann::ordered_json>& reports,
                               const std::vector<std::string>& names);

/// Executes every preset x rig x seed cell with identical traffic seeds.
/// Failed cells are recorded and the batch continues. Writes index.json and
/// comparison.csv into `spec.output`.
inline std::vector<BatchCell> run_batch(const BatchSpec& spec) {
  validate(spec);
  struct Job {
    BatchCell cell;
    RunConfig cfg;
  };
  std::vector<Job> jobs;
  const std::filesystem::path root(spec.output);
  for (const auto& preset : spec.presets) {
    for (const auto& rig : spec.rigs) {
      for (const auto seed : spec.seeds) {
        Job job;
        job.cell = {preset, rig.name, seed, {}, {}, {}};
        job.cfg = spec.base;
        job.cfg.scenario.weather_preset = preset;
        job.cfg.scenario.weather_override.reset();
        job.cfg.scenario.rig = rig.rig;
        job.cfg.scenario.seed = seed;
        job.cfg.output = (root / cell_name(preset, rig.name, seed)).string();
        jobs.push_back(std::move(job));
      }
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        const RunResult r = run_scenario(job.cfg);
        job.cell.status = to_string(r.status);
        job.cell.report = (std::filesystem::path(job.cfg.output) / "report.json").string();
      } catch (const std::exception& e) {
        job.cell.status = "failed";
        job.cell.error = e.what();
        spdlog::error("batch cell {} failed: {}", cell_name(job.cell.preset, job.cell.rig, job.cell.seed),
                      e.what());
      }
    }
  };
  const int n_threads = std::min<int>(spec.workers, static_cast<int>(jobs.size()));
  std::vector<std::thread> threads;
  for (int t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::vector<BatchCell> cells;
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  std::vector<nlohmann::ordered_json> reports;
  std::vector<std::string> names;
  for (const auto& job : jobs) {
    cells.push_back(job.cell);
    nlohmann::ordered_json entry{{"preset", job.cell.preset}, {"rig", job.cell.rig}, {"seed", job.cell.seed},
                                 {"status", job.cell.status}};
    entry["report"] = job.cell.report.empty() ? nlohmann::ordered_json(nullptr)
                                              : nlohmann::ordered_json(job.cell.report);
    if (!job.cell.error.empty()) entry["error"] = job.cell.error;
    index.push_back(entry);
    if (!job.cell.report.empty()) {
      reports.push_back(read_report(job.cell.report));
      names.push_back(cell_name(job.cell.preset, job.cell.rig, job.cell.seed));
    }
  }
  std::filesystem::create_directories(root);
  write_text(root / "index.json", nlohmann::ordered_json{{"cells", index}}.dump(2) + "\n");
  if (reports.size() >= 2) {
    const ComparisonTable table = compare(reports, names);
    std::string csv = "report,safety_mean,safety_median,comfort_mean,comfort_median,efficiency_mean,"
                      "efficiency_median,speed_score,aggregate\n";
    for (const auto& r : table.rows) {
      csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.name, r.mean[0], r.median[0], r.mean[1], r.median[1],
                         r.mean[2], r.median[2], r.speed_score, r.aggregate);
    }
    write_text(root / "comparison.csv", csv);
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Comparison

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline Cdf cdf_of_report(const nlohmann::ordered_json& report, const std::string& metric) {
  Cdf out;
  for (const auto& p : report.at("scores").at("cdfs").at(metric)) {
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  return out;
}

/// Fraction of the pooled support points where F_a(x) < F_b(x).
inline double cdf_dominance(const Cdf& a, const Cdf& b) {
  std::vector<double> xs;
  for (const auto& p : a) xs.push_back(p.value);
  for (const auto& p : b) xs.push_back(p.value);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::size_t wins = 0;
  for (double x : xs) {
    if (evaluate_cdf(a, x) < evaluate_cdf(b, x)) ++wins;
  }
  return xs.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(xs.size());
}

inline ComparisonTable compare(const std::vector<nlohmann::ordered_json>& reports,
                               const std::vector<std::string>& names) {
  if (reports.size() < 2) throw ConfigError("compare needs at least two reports");
  auto metric_set = [](const nlohmann::ordered_json& r) {
    std::vector<std::string> keys;
    for (const auto& [k, _] : r.at("scores").at("cdfs").items()) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
  };
  const auto expected = metric_set(reports.front());
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (metric_set(reports[i]) != expected) throw ConfigError("reports carry different metric sets");
  }
  for (const char* m : kMetricNames) {
    if (std::find(expected.begin(), expected.end(), m) == expected.end()) {
      throw ConfigError(std::string("reports lack the '") + m + "' metric");
    }
  }

  ComparisonTable table;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& s = reports[i].at("scores");
    ComparisonRow row;
    row.name = i < names.size() ? names[i] : fmt::format("report{}", i);
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      const auto frames = s.at("frames").at(kMetricNames[m]).get<std::vector<double>>();
      row.mean[m] = mean(frames);
      row.median[m] = median(frames);
    }
    row.speed_score = s.at("speed_score").get<double>();
    row.aggregate = s.at("aggregate").get<double>();
    table.rows.push_back(row);
  }
  for (std::size_t a = 0; a < reports.size(); ++a) {
    for (std::size_t b = 0; b < reports.size(); ++b) {
      if (a == b) continue;
      for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
        ComparisonPair p;
        p.a = a;
        p.b = b;
        p.metric = kMetricNames[m];
        p.dominance = cdf_dominance(cdf_of_report(reports[a], p.metric), cdf_of_report(reports[b], p.metric));
        p.mean_difference = table.rows[a].mean[m] - table.rows[b].mean[m];
        table.pairs.push_back(p);
      }
    }
  }
  return table;
}

inline std::string render_comparison(const ComparisonTable& t) {
  std::string out = fmt::format("{:<36} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n", "report",
                                "safety", "(median)", "comfort", "(median)", "effic.", "(median)", "speed",
                                "aggregate");
  for (const auto& r : t.rows) {
    out += fmt::format("{:<36} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f}\n", r.name,
                       r.mean[0], r.median[0], r.mean[1], r.median[1], r.mean[2], r.median[2], r.speed_score,
                       r.aggregate);
  }
  out += "\nCDF dominance (fraction of points where A's CDF lies below B's) and mean difference A-B:\n";
  for (const auto& p : t.pairs) {
    out += fmt::format("  {} vs {} [{}]: dominance {:.3f}, mean diff {:+.4f}\n", t.rows[p.a].name,
                       t.rows[p.b].name, p.metric, p.dominance, p.mean_difference);
  }
  return out;
}

}  // namespace wxdrive
