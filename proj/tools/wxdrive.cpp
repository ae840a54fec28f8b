// Command line front end: run, batch, rescore, compare, print-config.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "wxdrive/wxdrive.hpp"

namespace {

using namespace wxdrive;

void set_log_level(const std::string& level) {
  spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_default_logger(spdlog::default_logger()->clone("wxdrive"));
}

void print_summary(const RunResult& r) {
  const auto& s = r.scores;
  std::cout << fmt::format(
      "status {}  ticks {}  decisions {}  fallbacks {}\n"
      "safety {:.4f}  comfort {:.4f}  efficiency {:.4f}  speed {:.4f}  aggregate {:.4f}\n",
      to_string(r.status), r.log.back().tick, r.decisions, r.fallbacks, mean(s.safety), mean(s.comfort),
      mean(s.efficiency), s.speed_score, s.aggregate);
}

std::string default_batch_yaml() {
  nlohmann::json j;
  j["presets"] = std::vector<std::string>(kPresetNames.begin(), kPresetNames.end());
  j["rigs"] = nlohmann::json::array();
  for (const auto& r : standard_rigs()) {
    auto rig = rig_to_json(r.rig);
    rig["name"] = r.name;
    j["rigs"].push_back(rig);
  }
  j["seeds"] = {1};
  j["output"] = "runs/batch";
  j["workers"] = 4;
  j["base"] = config_to_json(RunConfig{});
  return to_yaml(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop driving evaluation harness"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run one scenario and score it");
  std::string config_path;
  std::string agent_override;
  std::string output_override;
  run->add_option("--config", config_path, "Scenario config file")->required()->check(CLI::ExistingFile);
  run->add_option("--agent", agent_override, "builtin:<name> | proc:<command> | tcp:<host>:<port>");
  run->add_option("--output", output_override, "Output directory");

  // batch
  auto* batch = app.add_subcommand("batch", "Run a weather x rig x seed grid");
  std::string spec_path;
  int workers = 0;
  batch->add_option("--spec", spec_path, "Batch spec file")->required()->check(CLI::ExistingFile);
  batch->add_option("--workers", workers, "Parallel cells (overrides the spec)");

  // rescore
  auto* rescore_cmd = app.add_subcommand("rescore", "Recompute scores from a trajectory log");
  std::string log_path, report_path, out_path, style;
  std::optional<double> tau_th, v_limit;
  std::vector<double> alpha;
  rescore_cmd->add_option("--log", log_path, "trajectory.jsonl")->required()->check(CLI::ExistingFile);
  rescore_cmd->add_option("--report", report_path, "Original report; supplies params and run metadata")
      ->check(CLI::ExistingFile);
  rescore_cmd->add_option("--tau-th", tau_th, "TTC threshold, s");
  rescore_cmd->add_option("--style", style, "cautious | normal | aggressive");
  rescore_cmd->add_option("--alpha", alpha, "comfort,efficiency,safety weights")->delimiter(',')->expected(3);
  rescore_cmd->add_option("--v-limit", v_limit, "Speed limit, m/s");
  rescore_cmd->add_option("--out", out_path, "Write the report here instead of stdout");

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "Tabulate and compare score reports");
  std::vector<std::string> reports;
  std::string csv_path;
  compare_cmd->add_option("reports", reports, "report.json files")->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--csv", csv_path, "Also write the pairwise table as CSV");

  // print-config
  auto* print_cmd = app.add_subcommand("print-config", "Print the default run config (or batch spec)");
  bool print_batch = false;
  print_cmd->add_flag("--batch", print_batch, "Print a batch spec instead");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      RunConfig cfg = config_from_json(load_yaml_as_json(config_path));
      if (!agent_override.empty()) cfg.agent.target = agent_override;
      if (!output_override.empty()) cfg.output = output_override;
      set_log_level(cfg.log_level);
      const RunResult r = run_scenario(cfg);
      print_summary(r);
      std::cout << "report: " << (std::filesystem::path(cfg.output) / "report.json").string() << "\n";
      return exit_code(r.status);
    }
    if (*batch) {
      BatchSpec spec = batch_from_json(load_yaml_as_json(spec_path));
      if (workers > 0) spec.workers = workers;
      set_log_level(spec.base.log_level);
      const auto cells = run_batch(spec);
      int failed = 0;
      for (const auto& c : cells) {
        std::cout << fmt::format("{:<32} {:<14}{}\n", cell_name(c.preset, c.rig, c.seed), c.status,
                                 c.error.empty() ? "" : "  " + c.error);
        if (c.status == "failed") ++failed;
      }
      std::cout << "index: " << (std::filesystem::path(spec.output) / "index.json").string() << "\n";
      return failed == 0 ? 0 : 1;
    }
    if (*rescore_cmd) {
      const auto log = read_log_file(log_path);
      nlohmann::ordered_json original;
      ScoringParams params;
      if (!report_path.empty()) {
        original = read_report(report_path);
        params = params_of_report(original);
      } else {
        original["config"] = nullptr;
        original["run"] = nullptr;
      }
      if (tau_th) params.tau_th = *tau_th;
      if (!style.empty()) params.style = driving_style_from_string(style);
      if (alpha.size() == 3) params.alpha = {alpha[0], alpha[1], alpha[2]};
      if (v_limit) params.v_limit = *v_limit;
      const auto report = rescore_report(log, original, params);
      if (out_path.empty()) {
        std::cout << report_text(report);
      } else {
        write_text(out_path, report_text(report));
        const auto& s = report.at("scores");
        std::cout << fmt::format("aggregate {}  speed_score {}\n", s.at("aggregate").get<double>(),
                                 s.at("speed_score").get<double>());
      }
      return 0;
    }
    if (*compare_cmd) {
      std::vector<nlohmann::ordered_json> loaded;
      for (const auto& p : reports) loaded.push_back(read_report(p));
      const auto table = compare(loaded, reports);
      std::cout << render_comparison(table);
      if (!csv_path.empty()) {
        std::string csv = "a,b,metric,dominance,mean_difference\n";
        for (const auto& p : table.pairs) {
          csv += fmt::format("{},{},{},{},{}\n", table.rows[p.a].name, table.rows[p.b].name, p.metric,
                             p.dominance, p.mean_difference);
        }
        write_text(csv_path, csv);
      }
      return 0;
    }
    if (*print_cmd) {
      std::cout << (print_batch ? default_batch_yaml() : to_yaml(config_to_json(RunConfig{})));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
