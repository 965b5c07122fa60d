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

#include "iqagent/error.hpp"
#include "iqagent/json_io.hpp"
#include "iqagent/planner.hpp"
#include "test_support.hpp"

using namespace iqagent;
using namespace iqagent::testing;

namespace {

const char* kAllTrue =
    R"({"query_type":"IQA","query_scope":"Global","distortion_source":"Inferred","distortions":null,)"
    R"("reference_mode":"No-Reference","required_tool":null,"plan":{"distortion_detection":true,)"
    R"("distortion_analysis":true,"tool_selection":true,"tool_execute":true}})";

QueryContext ctx_for(const std::string& query, bool with_reference = false) {
  QueryContext ctx;
  ctx.distorted_image = ImageHandle::from_raster(make_scene(32, 32, 1));
  if (with_reference) ctx.reference_image = ctx.distorted_image;
  ctx.query_text = query;
  return ctx;
}

Planner::Outcome plan_with(ScriptedBackend& backend, const QueryContext& ctx) {
  auto shared = std::shared_ptr<ScriptedBackend>(&backend, [](ScriptedBackend*) {});
  Gateway gw(shared);
  Planner planner(&gw, default_assets(), default_lexicon(), default_registry());
  return planner.plan(ctx);
}

}  // namespace

TEST(PlannerPrompt, CarriesQueryAndImage) {
  const auto msgs = build_planner_prompt(ctx_for("Is the sky noisy?"), default_assets());
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0].role, Role::kSystem);
  EXPECT_NE(msgs[0].text.find("You are a planner in an image quality assessment (IQA) system"), std::string::npos);
  EXPECT_NE(msgs[1].text.find("User's query: Is the sky noisy?"), std::string::npos);
  EXPECT_EQ(msgs[1].images.size(), 1u);
}

TEST(PlannerPrompt, ReferenceDoesNotChangePrompt) {
  const auto a = build_planner_prompt(ctx_for("Is the sky noisy?"), default_assets());
  const auto b = build_planner_prompt(ctx_for("Is the sky noisy?", true), default_assets());
  EXPECT_EQ(a[0].text, b[0].text);
  EXPECT_EQ(a[1].text, b[1].text);
}

TEST(PlannerPrompt, EmptyQueryRejected) {
  try {
    build_planner_prompt(ctx_for("   "), default_assets());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kQueryEmpty);
  }
}

TEST(PlannerPrompt, MissingTemplate) {
  TempDir dir;
  const Assets empty(dir.path());
  try {
    build_planner_prompt(ctx_for("Is the sky noisy?"), empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kTemplateMissing);
  }
}

TEST(ParsePlan, PlainObject) {
  const Plan p = parse_plan(kAllTrue);
  EXPECT_EQ(p.query_type, QueryType::kIqa);
  EXPECT_TRUE(p.global_scope());
  EXPECT_EQ(p.flags, (PlanFlags{true, true, true, true}));
  EXPECT_FALSE(p.distortions);
}

TEST(ParsePlan, FencedObjectMatchesPlain) {
  EXPECT_EQ(parse_plan(std::string("Sure! ```json\n") + kAllTrue + "\n```"), parse_plan(kAllTrue));
}

TEST(ParsePlan, FieldAliasesSurviveReserialisation) {
  json j = json::parse(kAllTrue);
  j["task_type"] = j["query_type"];
  j.erase("query_type");
  j["reference_type"] = "Full-Reference";
  j.erase("reference_mode");
  const Plan p = parse_plan(j.dump());
  EXPECT_EQ(p.reference_mode, ReferenceMode::kFullReference);
  EXPECT_EQ(parse_plan(encode(p).dump()), p);
}

TEST(ParsePlan, Errors) {
  try {
    parse_plan("I would plan carefully.");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kUnparseable);
  }
  try {
    parse_plan(R"({"query_scope":"Global"})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kSchemaViolation);
  }
}

TEST(ParsePlan, ScopesAndDistortions) {
  const Plan p = parse_plan(
      R"({"query_type":"IQA","query_scope":["the sky","building"],"distortion_source":"Explict",)"
      R"("distortions":{"the sky":["Noise"],"building":["motion blur"]},"reference_mode":"No-Reference",)"
      R"("required_tool":["LPIPS"],"plan":{"distortion_detection":false,"distortion_analysis":true,)"
      R"("tool_selection":false,"tool_execute":true}})");
  EXPECT_EQ(p.query_scope, (std::vector<std::string>{"the sky", "building"}));
  EXPECT_EQ(p.distortion_source, DistortionSource::kExplicit);
  ASSERT_TRUE(p.distortions);
  EXPECT_EQ(p.distortions->at("building")[0].name, Category::kBlurs);
  ASSERT_TRUE(p.required_tools);
  EXPECT_EQ(p.required_tools->front(), "LPIPS");
}

// Independent statement of the flag table, case by case.
TEST(RuleTable, AllInputsMatchTable) {
  for (int m = 0; m < 32; ++m) {
    PlannerRuleInputs in{(m & 1) != 0, (m & 2) != 0, (m & 4) != 0, (m & 8) != 0, (m & 16) != 0};
    PlanFlags want;
    if (in.is_iqa) {
      want.distortion_detection = !in.mentions_distortions;
      want.distortion_analysis = true;
      if (in.mentions_tool && in.mentions_region) want = {want.distortion_detection, true, false, true};
      else if (in.mentions_region) want = {want.distortion_detection, true, false, false};
      else if (in.mentions_tool) want = {want.distortion_detection, true, false, true};
      else want = {want.distortion_detection, true, true, true};
    }
    Plan draft;
    draft.flags = {(m & 1) == 0, (m & 2) == 0, (m & 4) == 0, (m & 8) == 0};
    if (in.mentions_region) draft.query_scope = {"sky"};
    if (in.mentions_distortions) draft.distortions = DistortionMap{{"Global", {{Category::kNoise, std::nullopt}}}};
    if (in.mentions_tool) draft.required_tools = std::vector<std::string>{"LPIPS"};
    const Plan p = apply_rule_table(draft, in);
    EXPECT_EQ(p.flags, want) << "inputs " << m;
    EXPECT_EQ(p.reference_mode, in.has_reference ? ReferenceMode::kFullReference : ReferenceMode::kNoReference);
    EXPECT_TRUE(validate_plan(p).empty()) << "inputs " << m;
    EXPECT_EQ(apply_rule_table(p, in), p) << "idempotence " << m;
  }
}

TEST(RuleTable, DraftFlagsAreIgnored) {
  PlannerRuleInputs in;
  Plan a, b;
  b.flags = {false, false, false, false};
  a.flags = {true, false, true, false};
  EXPECT_EQ(apply_rule_table(a, in).flags, apply_rule_table(b, in).flags);
}

TEST(FallbackPlan, NoisyPhoto) {
  const Plan p = fallback_plan(ctx_for("How noisy is this photo?"), default_lexicon(), default_registry());
  EXPECT_EQ(p.query_type, QueryType::kIqa);
  EXPECT_TRUE(p.global_scope());
  EXPECT_EQ(p.distortion_source, DistortionSource::kExplicit);
  ASSERT_TRUE(p.distortions);
  ASSERT_EQ(p.distortions->at("Global").size(), 1u);
  EXPECT_EQ(p.distortions->at("Global")[0].name, Category::kNoise);
  EXPECT_FALSE(p.flags.distortion_detection);
}

TEST(FallbackPlan, NamedTool) {
  const Plan p = fallback_plan(ctx_for("Use LPIPS to judge the blur."), default_lexicon(), default_registry());
  ASSERT_TRUE(p.required_tools);
  EXPECT_EQ(*p.required_tools, std::vector<std::string>{"LPIPS"});
  EXPECT_FALSE(p.flags.tool_selection);
  EXPECT_TRUE(p.flags.tool_execute);
}

TEST(FallbackPlan, AestheticQuestion) {
  const Plan p = fallback_plan(ctx_for("Is this painting beautiful?"), default_lexicon(), default_registry());
  EXPECT_EQ(p.query_type, QueryType::kOther);
  EXPECT_EQ(p.flags, PlanFlags{});
}

TEST(FallbackPlan, RegionAndCompression) {
  const Plan p = fallback_plan(ctx_for("Is there JPEG blocking on the building?"), default_lexicon(),
                               default_registry());
  EXPECT_FALSE(p.global_scope());
  ASSERT_TRUE(p.distortions);
  EXPECT_EQ(p.distortions->begin()->second[0].name, Category::kCompression);
  EXPECT_FALSE(p.flags.tool_selection);
  EXPECT_FALSE(p.flags.tool_execute);
}

TEST(Planner, ModelPlanIsRuleChecked) {
  ScriptedBackend backend;
  backend.add({Stage::kPlanner, "",
               R"({"query_type":"Other","query_scope":"Global","distortion_source":"Inferred","distortions":null,)"
               R"("reference_mode":"No-Reference","required_tool":null,"plan":{"distortion_detection":true,)"
               R"("distortion_analysis":true,"tool_selection":true,"tool_execute":true}})",
               {}});
  const auto out = plan_with(backend, ctx_for("Does it feel warm?"));
  EXPECT_FALSE(out.used_fallback);
  EXPECT_EQ(out.plan.flags, PlanFlags{});
  EXPECT_TRUE(validate_plan(out.plan).empty());
}

TEST(Planner, RetryThenSucceeds) {
  ScriptedBackend backend;
  backend.add({Stage::kPlanner, "", "no json at all", {}, 1});
  backend.add({Stage::kPlanner, "", kAllTrue, {}});
  const auto out = plan_with(backend, ctx_for("Rate this image."));
  EXPECT_FALSE(out.used_fallback);
  EXPECT_EQ(backend.calls(Stage::kPlanner), 2u);
}

TEST(Planner, FallsBackAfterTwoBadReplies) {
  ScriptedBackend backend;
  backend.add({Stage::kPlanner, "", "still prose", {}});
  const auto out = plan_with(backend, ctx_for("How noisy is this photo?"));
  EXPECT_TRUE(out.used_fallback);
  EXPECT_EQ(backend.calls(Stage::kPlanner), 2u);
  EXPECT_EQ(out.plan.distortion_source, DistortionSource::kExplicit);
}

TEST(Planner, GatewayErrorFallsBack) {
  ScriptedBackend backend;
  backend.fail_stage(Stage::kPlanner);
  const auto out = plan_with(backend, ctx_for("How noisy is this photo?"));
  EXPECT_TRUE(out.used_fallback);
  EXPECT_TRUE(validate_plan(out.plan).empty());
}

TEST(Planner, NoGatewayUsesRules) {
  Planner planner(nullptr, default_assets(), default_lexicon(), default_registry());
  const auto out = planner.plan(ctx_for("Is this painting beautiful?"));
  EXPECT_TRUE(out.used_fallback);
  EXPECT_EQ(out.plan.query_type, QueryType::kOther);
}

TEST(Planner, UnknownToolNamesAreNotToolMentions) {
  ScriptedBackend backend;
  json j = json::parse(kAllTrue);
  j["required_tool"] = {"MagicMeter"};
  backend.add({Stage::kPlanner, "", j.dump(), {}});
  const auto out = plan_with(backend, ctx_for("Rate this image."));
  EXPECT_FALSE(out.plan.required_tools);
  EXPECT_TRUE(out.plan.flags.tool_selection);
}
