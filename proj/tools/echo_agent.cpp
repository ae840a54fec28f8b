// Minimal protocol peer for testing: answers every decision_request with a
// fixed decision. Options allow delayed, garbage, or truncated replies.

#include <chrono>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Echo driving agent (stdio protocol peer)"};
  std::string decision = "idle";
  int delay_ms = 0;
  int exit_after = -1;
  bool garbage = false;
  app.add_option("--decision", decision, "Decision to answer with");
  app.add_option("--delay-ms", delay_ms, "Sleep before each reply");
  app.add_option("--exit-after", exit_after, "Exit after this many replies");
  app.add_flag("--garbage", garbage, "Reply with a non-JSON line");
  CLI11_PARSE(app, argc, argv);

  std::string line;
  int answered = 0;
  while (std::getline(std::cin, line)) {
    if (exit_after >= 0 && answered >= exit_after) return 0;
    const auto req = nlohmann::json::parse(line, nullptr, false);
    if (req.is_discarded() || req.value("type", "") != "decision_request") continue;
    if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    if (garbage) {
      std::cout << "not json at all" << std::endl;
    } else {
      std::cout << nlohmann::json{{"type", "decision"}, {"text", "Holding steady. DECISION: " + decision}}.dump()
                << std::endl;
    }
    ++answered;
  }
  return 0;
}
