#include <random>

#include <gtest/gtest.h>

#include "wxdrive/agent.hpp"

using namespace wxdrive;

TEST(ParseDecision, MarkerWithRationale) {
  EXPECT_EQ(parse_decision("The lane ahead is clear. DECISION: accelerate"), Decision::Accelerate);
  EXPECT_EQ(parse_decision("decision:turn_left"), Decision::TurnLeft);
  EXPECT_EQ(parse_decision("Decision :  TURN_RIGHT."), Decision::TurnRight);
  EXPECT_EQ(parse_decision("DECISION: idle"), Decision::Idle);
}

TEST(ParseDecision, LastValidMarkerWins) {
  EXPECT_EQ(parse_decision("DECISION: accelerate\nOn second thought, DECISION: decelerate"),
            Decision::Decelerate);
  EXPECT_EQ(parse_decision("DECISION: decelerate ... DECISION: maybe"), Decision::Decelerate);
}

TEST(ParseDecision, MarkerOverridesOtherKeywords) {
  EXPECT_EQ(parse_decision("I could accelerate or turn_left, but DECISION: idle"), Decision::Idle);
}

TEST(ParseDecision, SingleBareKeyword) {
  EXPECT_EQ(parse_decision("decelerate"), Decision::Decelerate);
  EXPECT_EQ(parse_decision("I will decelerate, yes, decelerate."), Decision::Decelerate);
}

TEST(ParseDecision, AmbiguousOrMissingIsParseError) {
  EXPECT_THROW(parse_decision("accelerate or decelerate"), ParseError);
  EXPECT_THROW(parse_decision("keep going"), ParseError);
  EXPECT_THROW(parse_decision(""), ParseError);
  EXPECT_THROW(parse_decision("turn left"), ParseError);
  EXPECT_THROW(parse_decision("idleness"), ParseError);
}

TEST(ParseDecision, RenderRoundTripIsLossless) {
  for (Decision d : kAllDecisions) EXPECT_EQ(parse_decision(render_decision(d)), d);
}

TEST(ParseDecision, ArbitraryTextReturnsOrThrowsParseError) {
  std::mt19937_64 rng(99);
  const std::vector<std::string> words{"idle",  "ACCELERATE", "decelerate", "turn_left", "turn_right",
                                       "DECISION", ":", " ",  "\n", "decision:", "turn", "left",
                                       "\xff\xfe", "{\"type\":", "\0", "..."};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::uniform_int_distribution<int> len(0, 12);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int i = 0; i < 5000; ++i) {
    std::string text;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) {
      if (k % 3 == 2) {
        text += static_cast<char>(byte(rng));
      } else {
        text += words[pick(rng)];
      }
    }
    try {
      const Decision d = parse_decision(text);
      EXPECT_TRUE(std::find(kAllDecisions.begin(), kAllDecisions.end(), d) != kAllDecisions.end());
    } catch (const ParseError&) {
    }
  }
}

TEST(Memory, HighScoreAcceptedImmediately) {
  MemoryStore store;
  memory_update(store, {42, 10, Decision::Accelerate, 0.9, "fine"});
  ASSERT_EQ(store.size(), 1u);
  EXPECT_EQ(store.entries()[0].status, MemoryStatus::AcceptedImmediately);
  EXPECT_FALSE(store.entries()[0].reflection_note);
}

TEST(Memory, ThresholdScoreIsGood) {
  MemoryStore store;
  memory_update(store, {1, 0, Decision::Idle, 0.8, ""});
  EXPECT_EQ(store.entries()[0].status, MemoryStatus::AcceptedImmediately);
}

TEST(Memory, LowScoreGetsReflectionNote) {
  MemoryStore store;
  memory_update(store, {42, 30, Decision::TurnLeft, 0.4, "min ttc 1.2 s"});
  const auto& e = store.entries()[0];
  EXPECT_EQ(e.status, MemoryStatus::AcceptedAfterReflection);
  ASSERT_TRUE(e.reflection_note);
  EXPECT_EQ(*e.reflection_note, "poor outcome for 'turn_left' at frame 30: min ttc 1.2 s");
}

TEST(Memory, UpdatesOnlyAppend) {
  MemoryStore store;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int i = 0; i < 40; ++i) {
    const auto before = store.entries();
    memory_update(store, {static_cast<std::uint64_t>(i), i * 10, Decision::Idle, score(rng), "x"});
    ASSERT_EQ(store.size(), before.size() + 1);
    for (std::size_t k = 0; k < before.size(); ++k) EXPECT_EQ(store.entries()[k], before[k]);
  }
  const auto recent = store.recent();
  ASSERT_EQ(recent.size(), kMaxHistory);
  EXPECT_EQ(recent.front().frame, 320);
  EXPECT_EQ(recent.back().frame, 390);
}

TEST(Memory, EntryJsonRoundTrip) {
  MemoryEntry e{0xfedcba9876543210ull, 120, Decision::TurnRight, 0.3125, MemoryStatus::AcceptedAfterReflection,
                "poor outcome"};
  EXPECT_EQ(memory_entry_from_json(nlohmann::json::parse(to_json(e).dump())), e);
  e.reflection_note.reset();
  e.status = MemoryStatus::AcceptedImmediately;
  EXPECT_EQ(memory_entry_from_json(nlohmann::json::parse(to_json(e).dump())), e);
  EXPECT_THROW(memory_entry_from_json(nlohmann::json{{"frame", 1}}), ParseError);
}

TEST(Fingerprint, StableFnv1a) {
  EXPECT_EQ(fingerprint(""), 14695981039346656037ull);
  EXPECT_EQ(fingerprint("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_NE(fingerprint("scene A"), fingerprint("scene B"));
}

TEST(WireFormat, RequestCarriesAllFields) {
  AgentRequest req;
  req.frame = 70;
  req.prompt = {"sys", "scene", "task"};
  req.lidar = LidarSummary{2, 30.0, 20.0, 40.0};
  req.history.push_back({7, 60, Decision::Idle, 1.0, MemoryStatus::AcceptedImmediately, std::nullopt});
  const auto j = nlohmann::json::parse(encode_request(req));
  EXPECT_EQ(j.at("type"), "decision_request");
  EXPECT_EQ(j.at("frame"), 70);
  EXPECT_EQ(j.at("system"), "sys");
  EXPECT_EQ(j.at("scene"), "scene");
  EXPECT_EQ(j.at("task"), "task");
  EXPECT_EQ(j.at("lidar").at("num_points"), 2);
  EXPECT_EQ(j.at("lidar").at("mean_distance"), 30.0);
  ASSERT_EQ(j.at("history").size(), 1u);
  EXPECT_EQ(j.at("history")[0].at("decision"), "idle");
  EXPECT_EQ(encode_request(req).find('\n'), std::string::npos);

  req.lidar.reset();
  EXPECT_TRUE(nlohmann::json::parse(encode_request(req)).at("lidar").is_null());
}

TEST(WireFormat, ResponseDecoding) {
  EXPECT_EQ(decode_response_text(encode_response("DECISION: idle")), "DECISION: idle");
  EXPECT_EQ(decode_response_text(R"({"type":"decision","text":"go","extra":1})"), "go");
  EXPECT_THROW(decode_response_text("not json"), ParseError);
  EXPECT_THROW(decode_response_text(R"({"type":"other","text":"go"})"), ParseError);
  EXPECT_THROW(decode_response_text(R"({"type":"decision"})"), ParseError);
  EXPECT_THROW(decode_response_text(R"({"type":"decision","text":3})"), ParseError);
  EXPECT_THROW(decode_response_text("[1,2]"), ParseError);
}

TEST(WireFormat, FallbackIsDecelerate) {
  const auto r = fallback_response();
  EXPECT_EQ(r.decision, Decision::Decelerate);
  EXPECT_EQ(r.rationale, "fallback");
  EXPECT_TRUE(r.fallback);
}

namespace {

Observation base_obs(double speed, int lane = 1) {
  Observation o;
  o.ego.lane_index = lane;
  o.ego.speed = speed;
  o.lane_count = 4;
  o.speed_limit = 13.89;
  return o;
}

}  // namespace

TEST(Baseline, ClosingLeadBrakes) {
  auto o = base_obs(12.0);
  o.detected.push_back({1, Sector::Front, 1, 10.0, -5.0, false});
  EXPECT_EQ(baseline_agent(o), Decision::Decelerate);
}

TEST(Baseline, OpenRoadBelowLimitAccelerates) {
  EXPECT_EQ(baseline_agent(base_obs(8.0)), Decision::Accelerate);
}

TEST(Baseline, AtLimitHolds) {
  EXPECT_EQ(baseline_agent(base_obs(13.5)), Decision::Idle);
}

TEST(Baseline, OverLimitBrakes) {
  EXPECT_EQ(baseline_agent(base_obs(15.0)), Decision::Decelerate);
}

TEST(Baseline, BlockedOvertakesLeftWhenClear) {
  auto o = base_obs(8.0);
  o.detected.push_back({1, Sector::Front, 1, 20.0, 0.0, false});
  EXPECT_EQ(baseline_agent(o), Decision::TurnLeft);
  o.detected.push_back({2, Sector::Front, 0, 10.0, 0.0, false});
  EXPECT_EQ(baseline_agent(o), Decision::TurnRight);
  o.detected.push_back({3, Sector::Rear, 2, 5.0, 0.0, false});
  EXPECT_EQ(baseline_agent(o), Decision::Idle);
}

TEST(ScriptedPolicies, CautiousAndAggressive) {
  EXPECT_EQ(cautious_policy(base_obs(4.0)), Decision::Accelerate);
  EXPECT_EQ(cautious_policy(base_obs(12.0)), Decision::Decelerate);
  EXPECT_EQ(cautious_policy(base_obs(8.0)), Decision::Idle);
  EXPECT_EQ(aggressive_policy(base_obs(15.0)), Decision::Accelerate);
  EXPECT_EQ(aggressive_policy(base_obs(21.0)), Decision::Idle);
  auto o = base_obs(15.0);
  o.detected.push_back({1, Sector::Front, 1, 20.0, -2.0, false});
  EXPECT_EQ(aggressive_policy(o), Decision::TurnLeft);
}
