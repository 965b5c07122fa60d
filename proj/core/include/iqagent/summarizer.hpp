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

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iqagent/assets.hpp"
#include "iqagent/executor.hpp"
#include "iqagent/gateway.hpp"
#include "iqagent/model.hpp"
#include "iqagent/planner.hpp"

namespace iqagent {

// Literal: q = sum_c alpha_c p_c c.
// Normalized: q = sum_c alpha_c p_c c / sum_c alpha_c p_c, always in [1, 5].
enum class FusionMode { kLiteral, kNormalized };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view s);

struct FusionInputs {
  std::vector<double> tool_scores;
  std::map<int, double> level_logprobs;  // 1..5 -> log p
  double eta = 1.0;
};

struct FusionDiagnostics {
  double q_bar = 0.0;
  std::array<double, 5> alpha{};
  std::array<double, 5> p{};
  double q_literal = 0.0;
  double q_normalized = 0.0;
  // sum_c p_c c, the uniform-averaging baseline.
  double q_uniform = 0.0;
};

struct FusionResult {
  double q = 0.0;
  FusionDiagnostics diagnostics;
};

// Gaussian weights over levels 1..5 centred on q_bar.
std::array<double, 5> hvs_weights(double q_bar, double eta);
// Softmax over the five level log-probabilities. Throws kBackendUnsupported if
// a level is missing.
std::array<double, 5> level_softmax(const std::map<int, double>& logprobs);
double uniform_average_score(const std::array<double, 5>& p);

// Throws kEmptyScores when no tool score is given, kNonFiniteInput for bad eta.
FusionResult fuse_scores(const FusionInputs& inputs, FusionMode mode);
json encode(const FusionDiagnostics& d);

struct SufficiencyResult {
  bool sufficient = true;
  std::vector<std::string> missing;  // "tool_score", "analysis:<scope>"
};

SufficiencyResult sufficiency_check(const IntermediateState& state, AnswerKind kind,
                                    bool logprobs_available);

struct SummarizerConfig {
  FusionMode fusion_mode = FusionMode::kNormalized;
  double eta = 1.0;
  int max_rounds = 2;
};

struct ReflectionOutcome {
  int rounds = 0;
  SufficiencyResult final_check;
};

class Summarizer {
 public:
  Summarizer(Gateway* gateway, const Assets& assets, SummarizerConfig config)
      : gateway_(gateway), assets_(assets), config_(config) {}

  // Replans with the missing evidence listed, re-runs only the implicated
  // sub-tasks and merges the new evidence. Returns the state unchanged when it
  // is already sufficient.
  IntermediateState reflect_loop(const QueryContext& ctx, IntermediateState state,
                                 AnswerKind kind, bool logprobs_available,
                                 const Planner& planner, Executor& executor,
                                 ReflectionOutcome* outcome = nullptr) const;

  // Requests level log-probabilities with the score prompt. Returns nullopt
  // when the backend cannot provide them.
  std::optional<LevelLogprobs> request_level_logprobs(const QueryContext& ctx,
                                                      const IntermediateState& state) const;

  FinalAnswer generate_answer(const QueryContext& ctx, const IntermediateState& state,
                              AnswerKind kind, const std::optional<LevelLogprobs>& logprobs,
                              const SufficiencyResult& sufficiency) const;

  // Renders M_t for the summarizer prompt slots.
  static std::string render_analysis(const IntermediateState& state);
  static std::string render_tool_scores(const IntermediateState& state);

  const SummarizerConfig& config() const { return config_; }

 private:
  Gateway* gateway_;
  const Assets& assets_;
  SummarizerConfig config_;
};

// Merges evidence gathered in a reflection round into `into`.
void merge_state(IntermediateState& into, const IntermediateState& extra);

}  // namespace iqagent
