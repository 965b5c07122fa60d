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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iqagent/assets.hpp"
#include "iqagent/gateway.hpp"
#include "iqagent/model.hpp"
#include "iqagent/tools.hpp"

namespace iqagent {

struct PlannerRuleInputs {
  bool is_iqa = true;
  bool mentions_distortions = false;
  bool mentions_region = false;
  bool mentions_tool = false;
  bool has_reference = false;

  friend bool operator==(const PlannerRuleInputs&, const PlannerRuleInputs&) = default;
};

PlannerRuleInputs derive_rule_inputs(const Plan& draft, const QueryContext& ctx);

// Forces the flags (and reference mode) to the deterministic table; the
// draft's own flags are ignored. The result always passes validate_plan.
Plan apply_rule_table(Plan draft, const PlannerRuleInputs& inputs);

// Throws kQueryEmpty, kTemplateMissing. `missing` lists evidence the summarizer
// could not find; it is appended to the user message when replanning.
std::vector<ChatMessage> build_planner_prompt(const QueryContext& ctx, const Assets& assets,
                                              const std::vector<std::string>& missing = {});

// Throws kUnparseable (no JSON object) or kSchemaViolation (missing field).
Plan parse_plan(std::string_view model_output);

// Keyword tables used by the rule-based planner.
class Lexicon {
 public:
  struct DistortionTerm {
    std::string term;
    Category category;
    std::optional<std::string> subtype;
  };

  Lexicon() = default;
  static Lexicon from_json(const json& j);

  struct Scan {
    std::vector<DistortionCategory> distortions;
    std::vector<std::string> regions;
    std::vector<std::string> tools;
    bool aesthetic = false;
  };

  Scan scan(std::string_view text, const ToolRegistry& registry) const;

 private:
  std::vector<DistortionTerm> distortion_terms_;  // longest term first
  std::vector<std::string> aesthetic_terms_;
  std::vector<std::string> region_terms_;
};

Plan fallback_plan(const QueryContext& ctx, const Lexicon& lexicon, const ToolRegistry& registry);

class Planner {
 public:
  struct Outcome {
    Plan plan;
    bool used_fallback = false;
    std::vector<TraceEntry> trace;
  };

  // gateway may be null, in which case every plan comes from fallback_plan.
  Planner(Gateway* gateway, const Assets& assets, const Lexicon& lexicon,
          const ToolRegistry& registry)
      : gateway_(gateway), assets_(assets), lexicon_(lexicon), registry_(registry) {}

  Outcome plan(const QueryContext& ctx, const std::vector<std::string>& missing = {}) const;

 private:
  Gateway* gateway_;
  const Assets& assets_;
  const Lexicon& lexicon_;
  const ToolRegistry& registry_;
};

}  // namespace iqagent
