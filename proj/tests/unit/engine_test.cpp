/*
 * Copyright 2026 The iqagent Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "iqagent/engine.hpp"
#include "iqagent/error.hpp"
#include "iqagent/json_io.hpp"
#include "scenarios.hpp"
#include "test_support.hpp"

using namespace iqagent;
using namespace iqagent::testing;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kIo;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Plan iqa_plan() { return {}; }

}  // namespace

TEST(Config, LayersInOrder) {
  TempDir dir;
  std::ofstream(dir / "c.json") << R"({"eta": 2, "max_rounds": 1, "backend": "replay", "cassette": "a.json",
                                       "registry_patch": ["p1.json", "p2.json"]})";
  const auto c = load_config((dir / "c.json").string(), {{"eta", "0.5"}, {"cassette", "b.json"}},
                             {{"cassette", "c.json"}});
  EXPECT_EQ(c.summarizer.eta, 0.5);
  EXPECT_EQ(c.summarizer.max_rounds, 1);
  EXPECT_EQ(c.backend, BackendKind::kReplay);
  EXPECT_EQ(c.cassette, "c.json");
  EXPECT_EQ(c.registry_patches, (std::vector<std::string>{"p1.json", "p2.json"}));

  const auto d = load_config(std::nullopt, {}, {});
  EXPECT_EQ(d.backend, BackendKind::kNone);
  EXPECT_EQ(d.summarizer.fusion_mode, FusionMode::kNormalized);
  EXPECT_EQ(d.summarizer.eta, 1.0);
}

TEST(Config, RejectsBadSettings) {
  EngineConfig c;
  EXPECT_EQ(code_of([&] { apply_setting(c, "no_such_key", "1"); }), Errc::kConfig);
  EXPECT_EQ(code_of([&] { apply_setting(c, "eta", "-1"); }), Errc::kConfig);
  EXPECT_EQ(code_of([&] { apply_setting(c, "backend", "magic"); }), Errc::kConfig);
  EXPECT_EQ(code_of([&] { apply_setting(c, "logprob_epsilon", "0.3"); }), Errc::kConfig);
  EXPECT_EQ(code_of([&] { load_config("/nonexistent/config.json", {}, {}); }), Errc::kConfig);
  apply_setting(c, "fusion_mode", "literal");
  EXPECT_EQ(c.summarizer.fusion_mode, FusionMode::kLiteral);
}

TEST(Config, EveryKeyIsAccepted) {
  // Each documented key is recognised by apply_setting (value errors aside).
  for (const auto& [key, _] : config_keys()) {
    EngineConfig c;
    try {
      apply_setting(c, key, "1");
    } catch (const Error& e) {
      EXPECT_EQ(std::string(e.what()).find("unknown configuration key"), std::string::npos) << key;
    }
  }
}

TEST(ClassifyQuery, Kinds) {
  EXPECT_EQ(classify_query("Rate the overall quality of this image.", iqa_plan()), AnswerKind::kScore);
  EXPECT_EQ(classify_query("Which is worse?\nA. Blur\nB. Noise", iqa_plan()), AnswerKind::kChoice);
  EXPECT_EQ(classify_query("Why does the sky look grainy?", iqa_plan()), AnswerKind::kFreeText);
  Plan scoped;
  scoped.query_scope = {"sky"};
  EXPECT_EQ(classify_query("Rate the quality of the sky.", scoped), AnswerKind::kFreeText);
  Plan other;
  other.query_type = QueryType::kOther;
  EXPECT_EQ(classify_query("Rate the mood.\nA. calm\nB. tense", other), AnswerKind::kFreeText);
}

TEST(Engine, ReplayMatchesGoldensRepeatedly) {
  for (const auto& s : scenarios()) {
    const auto golden = slurp(fixture_dir() / ("golden_" + s.id + ".json"));
    for (int run = 0; run < 2; ++run) {
      Engine engine(replay_config(fixture_dir() / "e2e.cassette.json", kScenarioEchoArgs));
      const auto answer = engine.assess(scenario_context(s));
      EXPECT_EQ(encode(answer).dump(2) + "\n", golden) << s.id << " run " << run;
    }
  }
}

TEST(Engine, ScenarioAnswers) {
  Engine engine(replay_config(fixture_dir() / "e2e.cassette.json", kScenarioEchoArgs));
  const auto nr = engine.run(scenario_context(scenario("global_nr")));
  EXPECT_EQ(nr.kind, AnswerKind::kScore);
  ASSERT_TRUE(nr.answer.score);
  EXPECT_GE(*nr.answer.score, 1.0);
  EXPECT_LE(*nr.answer.score, 5.0);
  EXPECT_TRUE(validate_state(nr.state).empty());

  const auto fr = engine.run(scenario_context(scenario("explicit_fr")));
  EXPECT_EQ(fr.kind, AnswerKind::kChoice);
  EXPECT_EQ(fr.answer.choice, 'B');
  EXPECT_EQ(fr.plan.reference_mode, ReferenceMode::kFullReference);
  EXPECT_FALSE(fr.plan.flags.distortion_detection);
}

TEST(Engine, NonIqaSkipsTools) {
  Engine engine(replay_config(fixture_dir() / "e2e.cassette.json", kScenarioEchoArgs));
  const auto before = engine.gateway()->call_count();
  const auto run = engine.run(scenario_context(scenario("non_iqa")));
  EXPECT_EQ(run.plan.query_type, QueryType::kOther);
  EXPECT_TRUE(run.state.scores.empty());
  EXPECT_EQ(run.answer.answer_kind, AnswerKind::kFreeText);
  // One planner call plus at most one summarizer call.
  EXPECT_LE(engine.gateway()->call_count() - before, 2u);
}

TEST(Engine, StrictReplayMissIsFatal) {
  Engine engine(replay_config(fixture_dir() / "e2e.cassette.json", kScenarioEchoArgs));
  auto ctx = scenario_context(scenario("global_nr"));
  ctx.query_text = "A question nobody recorded.";
  EXPECT_EQ(code_of([&] { engine.assess(ctx); }), Errc::kReplayMiss);
}

TEST(Engine, NoBackendRunsNativeTools) {
  EngineConfig c;
  Engine engine(c);
  auto ctx = scenario_context(scenario("explicit_fr"));
  ctx.query_text = "Rate the overall quality of this image.";
  ctx.user_tool_constraints = std::vector<std::string>{"SSIM", "PSNR"};
  const auto run = engine.run(ctx);
  EXPECT_EQ(run.kind, AnswerKind::kScore);
  EXPECT_TRUE(run.answer.diagnostics["planner_fallback"].get<bool>());
  ASSERT_TRUE(run.answer.score);
  EXPECT_FALSE(run.state.scores.empty());
  for (const auto& s : run.state.scores) EXPECT_TRUE(s.ok) << s.tool_name << ": " << s.failure_reason;
}

TEST(Engine, RequiresDistortedImage) {
  Engine engine(EngineConfig{});
  QueryContext ctx;
  ctx.query_text = "Rate it.";
  EXPECT_EQ(code_of([&] { engine.assess(ctx); }), Errc::kImageDecode);
}

TEST(Engine, ReplayNeedsCassette) {
  EngineConfig c;
  c.backend = BackendKind::kReplay;
  EXPECT_EQ(code_of([&] { Engine e(c); }), Errc::kConfig);
  c.backend = BackendKind::kRemote;
  EXPECT_EQ(code_of([&] { Engine e(c); }), Errc::kConfig);
}
