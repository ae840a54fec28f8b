#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "wxdrive/wxdrive.hpp"

using namespace wxdrive;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "wxdrive_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig quick_config(const fs::path& out, const std::string& weather = "good", int n_vehicles = 10) {
  RunConfig c;
  c.scenario.weather_preset = weather;
  c.scenario.traffic.n_vehicles = n_vehicles;
  c.output = out.string();
  return c;
}

}  // namespace

TEST(Run, EmptyRoadReachesGoalWithPerfectSafety) {
  const auto dir = scratch("empty_road");
  const auto r = run_scenario(quick_config(dir, "good", 0));
  EXPECT_EQ(r.status, RunStatus::GoalReached);
  EXPECT_EQ(mean(r.scores.safety), 1.0);
  EXPECT_EQ(r.fallbacks, 0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "trajectory.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "memory.jsonl"));
  for (const char* m : kMetricNames) EXPECT_TRUE(fs::exists(dir / (std::string("cdf_") + m + ".csv")));
}

TEST(Run, ReportIsLabelledWithWeather) {
  const auto dir = scratch("heavy_rain");
  const auto r = run_scenario(quick_config(dir, "heavy_rain"));
  const auto report = read_report((dir / "report.json").string());
  EXPECT_EQ(report.at("run").at("weather"), "heavy_rain");
  EXPECT_EQ(report.at("run").at("weather_config").at("precipitation"), 70.0);
  EXPECT_EQ(report.at("config").at("scenario").at("weather"), "heavy_rain");
  EXPECT_EQ(report.at("run").at("status"), to_string(r.status));
  EXPECT_EQ(report.at("format"), "wxdrive-report/1");
}

TEST(Run, LogHasOneRecordPerTickAndDecisionsOnPeriod) {
  const auto dir = scratch("log_shape");
  const auto r = run_scenario(quick_config(dir));
  const auto log = read_log_file((dir / "trajectory.jsonl").string());
  ASSERT_EQ(log.size(), r.log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i].tick, static_cast<std::int64_t>(i));
    const bool last = i + 1 == log.size();
    if (!last) {
      EXPECT_EQ(log[i].decision.has_value(), i % 10 == 0) << i;
    }
  }
}

TEST(Run, SameConfigTwiceIsByteIdentical) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  auto ca = quick_config(a, "storm");
  auto cb = quick_config(b, "storm");
  ca.scenario.rig = cb.scenario.rig = {3, 3, true};
  run_scenario(ca);
  run_scenario(cb);
  EXPECT_EQ(slurp(a / "trajectory.jsonl"), slurp(b / "trajectory.jsonl"));
  EXPECT_EQ(slurp(a / "memory.jsonl"), slurp(b / "memory.jsonl"));
  auto ra = read_report((a / "report.json").string());
  auto rb = read_report((b / "report.json").string());
  ra["config"].erase("output");
  rb["config"].erase("output");
  EXPECT_EQ(ra.dump(), rb.dump());
}

TEST(Run, MemoryReplaysFromCaseLog) {
  const auto dir = scratch("memory");
  const auto cfg = quick_config(dir, "fog");
  const auto r = run_scenario(cfg);
  const auto entries = read_memory_file((dir / "memory.jsonl").string());
  ASSERT_EQ(entries, r.memory.entries());
  std::vector<std::uint64_t> fps;
  for (const auto& e : entries) fps.push_back(e.scene_fingerprint);
  const auto rebuilt = rebuild_memory(read_log_file((dir / "trajectory.jsonl").string()), fps, cfg.scoring);
  EXPECT_EQ(rebuilt.entries(), entries);
}

TEST(Run, HistoryReachesAgentWithReflectionNotes) {
  const auto dir = scratch("history");
  std::vector<std::size_t> history_sizes;
  bool saw_note = false;
  PolicyAgent inner([](const Observation& o) { return aggressive_policy(o); }, "probe");
  struct Probe final : Agent {
    PolicyAgent& inner;
    std::vector<std::size_t>& sizes;
    bool& saw_note;
    Probe(PolicyAgent& i, std::vector<std::size_t>& s, bool& n) : inner(i), sizes(s), saw_note(n) {}
    AgentResponse decide(const AgentRequest& req, const Observation& obs) override {
      sizes.push_back(req.history.size());
      for (const auto& e : req.history) saw_note = saw_note || e.reflection_note.has_value();
      return inner.decide(req, obs);
    }
    std::string describe() const override { return "probe"; }
  } probe(inner, history_sizes, saw_note);
  auto cfg = quick_config(dir, "storm", 20);
  run_scenario(cfg, &probe);
  ASSERT_GE(history_sizes.size(), 3u);
  EXPECT_EQ(history_sizes[0], 0u);
  EXPECT_EQ(history_sizes[1], 1u);
  for (std::size_t s : history_sizes) EXPECT_LE(s, kMaxHistory);
  EXPECT_TRUE(saw_note);
}

TEST(Run, DeadRemoteAgentYieldsScoredPartialLog) {
  const auto dir = scratch("dead_agent");
  auto cfg = quick_config(dir);
  cfg.agent.target = std::string("proc:") + WXDRIVE_ECHO_AGENT + " --exit-after 3";
  cfg.agent.retries = 0;
  const auto r = run_scenario(cfg);
  EXPECT_EQ(r.status, RunStatus::AgentFailure);
  EXPECT_EQ(r.decisions, 3);
  EXPECT_FALSE(r.failure.empty());
  const auto report = read_report((dir / "report.json").string());
  EXPECT_EQ(report.at("run").at("partial"), true);
  EXPECT_EQ(report.at("scores").at("frames").at("safety").size(), r.log.size());
}

TEST(Run, ProcessAgentDrivesTheLoop) {
  const auto dir = scratch("proc_agent");
  auto cfg = quick_config(dir);
  cfg.agent.target = std::string("proc:") + WXDRIVE_ECHO_AGENT + " --decision accelerate";
  cfg.agent.timeout_ms = 2000;
  const auto r = run_scenario(cfg);
  EXPECT_GT(r.decisions, 0);
  EXPECT_EQ(r.fallbacks, 0);
  EXPECT_GT(r.log.back().speed, 10.0);
}

TEST(Rescore, OriginalParamsReproduceReportExactly) {
  const auto dir = scratch("rescore_same");
  run_scenario(quick_config(dir, "heavy_rain"));
  const auto original = read_report((dir / "report.json").string());
  const auto log = read_log_file((dir / "trajectory.jsonl").string());
  const auto again = rescore_report(log, original, params_of_report(original));
  EXPECT_EQ(report_text(again), slurp(dir / "report.json"));
  EXPECT_EQ(report_text(rescore_report(log, again, params_of_report(again))), report_text(again));
}

TEST(Rescore, LargerThresholdNeverRaisesSafety) {
  const auto dir = scratch("rescore_tau");
  const auto r = run_scenario(quick_config(dir, "good", 20));
  ScoringParams p;
  p.tau_th = 8.0;
  const auto doubled = rescore((dir / "trajectory.jsonl").string(), p);
  ASSERT_EQ(doubled.safety.size(), r.scores.safety.size());
  for (std::size_t i = 0; i < doubled.safety.size(); ++i) EXPECT_LE(doubled.safety[i], r.scores.safety[i]);
}

TEST(Rescore, TruncatedLogNamesFirstBadLine) {
  const auto dir = scratch("rescore_trunc");
  run_scenario(quick_config(dir));
  const std::string text = slurp(dir / "trajectory.jsonl");
  std::size_t pos = 0;
  for (int i = 0; i < 5; ++i) pos = text.find('\n', pos) + 1;
  write_text(dir / "cut.jsonl", text.substr(0, pos + 20));
  try {
    rescore((dir / "cut.jsonl").string(), ScoringParams{});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 6u);
    EXPECT_NE(std::string(e.what()).find("line 6"), std::string::npos);
  }
}

TEST(Batch, FivePresetsOneRigOneSeed) {
  const auto dir = scratch("batch5");
  BatchSpec spec;
  spec.base.scenario.max_ticks = 150;
  spec.presets = {kPresetNames.begin(), kPresetNames.end()};
  spec.rigs = {standard_rigs()[0]};
  spec.seeds = {4};
  spec.output = dir.string();
  spec.workers = 3;
  const auto cells = run_batch(spec);
  ASSERT_EQ(cells.size(), 5u);
  std::vector<std::string> trajectories;
  for (const auto& c : cells) {
    ASSERT_FALSE(c.report.empty()) << c.error;
    const auto report = read_report(c.report);
    EXPECT_EQ(report.at("run").at("seed"), 4);
    EXPECT_EQ(report.at("run").at("weather"), c.preset);
  }
  EXPECT_TRUE(fs::exists(dir / "index.json"));
  EXPECT_TRUE(fs::exists(dir / "comparison.csv"));
  const auto index = nlohmann::json::parse(slurp(dir / "index.json"));
  EXPECT_EQ(index.at("cells").size(), 5u);
}

TEST(Batch, SixtyCellGrid) {
  const auto dir = scratch("batch60");
  BatchSpec spec;
  spec.base.scenario.max_ticks = 40;
  spec.presets = {kPresetNames.begin(), kPresetNames.end()};
  spec.rigs = standard_rigs();
  spec.seeds = {1, 2, 3};
  spec.output = dir.string();
  spec.workers = 4;
  const auto cells = run_batch(spec);
  ASSERT_EQ(cells.size(), 60u);
  for (const auto& c : cells) EXPECT_TRUE(fs::exists(c.report)) << c.error;
}

TEST(Batch, CellsAreIsolated) {
  const auto a = scratch("iso_a");
  const auto b = scratch("iso_b");
  BatchSpec spec;
  spec.base.scenario.max_ticks = 200;
  spec.rigs = {standard_rigs()[3]};
  spec.seeds = {9};
  spec.workers = 2;
  spec.presets = {"fog", "storm", "good"};
  spec.output = a.string();
  run_batch(spec);
  spec.presets = {"fog"};
  spec.output = b.string();
  run_batch(spec);
  const auto cell = cell_name("fog", "6cam+lidar", 9);
  EXPECT_EQ(slurp(a / cell / "trajectory.jsonl"), slurp(b / cell / "trajectory.jsonl"));
  auto ra = read_report((a / cell / "report.json").string());
  auto rb = read_report((b / cell / "report.json").string());
  ra["config"].erase("output");
  rb["config"].erase("output");
  EXPECT_EQ(ra.dump(), rb.dump());
}

TEST(Batch, EmptyPresetListIsConfigError) {
  BatchSpec spec;
  spec.rigs = standard_rigs();
  spec.seeds = {1};
  EXPECT_THROW(run_batch(spec), ConfigError);
  EXPECT_THROW(validate(batch_from_json(nlohmann::json{{"presets", nlohmann::json::array()}})), ConfigError);
}

TEST(Batch, SpecFromYaml) {
  const auto spec = batch_from_json(parse_yaml_as_json(
      "presets: [fog, good]\n"
      "rigs:\n"
      "  - {name: front, front_cameras: 3, rear_cameras: 0, lidar: false}\n"
      "seeds: [1, 2]\n"
      "workers: 2\n"
      "base:\n"
      "  scenario:\n"
      "    max_ticks: 100\n"));
  EXPECT_EQ(spec.presets, (std::vector<std::string>{"fog", "good"}));
  ASSERT_EQ(spec.rigs.size(), 1u);
  EXPECT_EQ(spec.rigs[0].name, "front");
  EXPECT_EQ(spec.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(spec.base.scenario.max_ticks, 100);
}

TEST(Compare, ReportAgainstItselfHasNoDifferences) {
  const auto dir = scratch("cmp_self");
  run_scenario(quick_config(dir, "storm"));
  const auto r = read_report((dir / "report.json").string());
  const auto t = compare({r, r}, {"a", "b"});
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& p : t.pairs) {
    EXPECT_EQ(p.dominance, 0.0);
    EXPECT_EQ(p.mean_difference, 0.0);
  }
}

TEST(Compare, ThreeReportsGiveThreeRowsAndAllPairs) {
  std::vector<nlohmann::ordered_json> reports;
  for (const char* w : {"good", "fog", "storm"}) {
    const auto dir = scratch(std::string("cmp3_") + w);
    auto cfg = quick_config(dir, w);
    cfg.scenario.max_ticks = 200;
    run_scenario(cfg);
    reports.push_back(read_report((dir / "report.json").string()));
  }
  const auto t = compare(reports, {"good", "fog", "storm"});
  EXPECT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.pairs.size(), 3u * 2u * kMetricNames.size());
  EXPECT_NE(render_comparison(t).find("storm"), std::string::npos);
}

TEST(Compare, SlowAgentIsSaferThanFastAgent) {
  std::vector<nlohmann::ordered_json> reports;
  for (const char* target : {"builtin:cautious", "builtin:aggressive"}) {
    const auto dir = scratch(std::string("cmp_dir_") + (target + 8));
    auto cfg = quick_config(dir, "good", 20);
    cfg.agent.target = target;
    run_scenario(cfg);
    reports.push_back(read_report((dir / "report.json").string()));
  }
  const auto t = compare(reports, {"slow", "fast"});
  EXPECT_GT(t.rows[0].mean[0], t.rows[1].mean[0]);
}

TEST(Compare, MismatchedMetricSetsAreErrors) {
  const auto dir = scratch("cmp_bad");
  run_scenario(quick_config(dir));
  auto a = read_report((dir / "report.json").string());
  auto b = a;
  b["scores"]["cdfs"].erase("comfort");
  EXPECT_THROW(compare({a, b}, {"a", "b"}), ConfigError);
  EXPECT_THROW(compare({a}, {"a"}), ConfigError);
}

TEST(Cli, PrintConfigThenRun) {
  const auto dir = scratch("cli");
  const std::string cli = WXDRIVE_CLI;
  const auto cfg = (dir / "config.yaml").string();
  ASSERT_EQ(std::system((cli + " print-config > " + cfg).c_str()), 0);
  const auto out = (dir / "run").string();
  const int rc = std::system((cli + " run --config " + cfg + " --output " + out + " > /dev/null").c_str());
  ASSERT_TRUE(WIFEXITED(rc));
  EXPECT_TRUE(WEXITSTATUS(rc) == 0 || WEXITSTATUS(rc) == 2 || WEXITSTATUS(rc) == 3) << WEXITSTATUS(rc);
  EXPECT_TRUE(fs::exists(fs::path(out) / "report.json"));
  EXPECT_EQ(std::system((cli + " rescore --log " + out + "/trajectory.jsonl --report " + out +
                         "/report.json --out " + out + "/again.json > /dev/null")
                            .c_str()),
            0);
  EXPECT_EQ(slurp(fs::path(out) / "again.json"), slurp(fs::path(out) / "report.json"));
  EXPECT_EQ(std::system((cli + " compare " + out + "/report.json " + out + "/again.json > /dev/null").c_str()), 0);
}

TEST(Cli, BadConfigExitsWithError) {
  const auto dir = scratch("cli_bad");
  write_text(dir / "bad.yaml", "scenario:\n  weather: hail\n");
  const int rc = std::system((std::string(WXDRIVE_CLI) + " run --config " + (dir / "bad.yaml").string() +
                              " 2> /dev/null")
                                 .c_str());
  ASSERT_TRUE(WIFEXITED(rc));
  EXPECT_EQ(WEXITSTATUS(rc), 1);
}
