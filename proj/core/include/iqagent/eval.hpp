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
#include <span>
#include <string>
#include <vector>

#include "iqagent/engine.hpp"
#include "iqagent/model.hpp"

namespace iqagent {

// Mean ranks (1-based); tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Throw kDegenerateInput on length mismatch, fewer than 3 points, or a
// constant vector.
double srcc(std::span<const double> pred, std::span<const double> mos);
double plcc(std::span<const double> pred, std::span<const double> mos);

// ---------------------------------------------------------------------------
// Score correlation against MOS

struct MosRow {
  std::string image_path;
  std::optional<std::string> reference_path;
  double mos = 0.0;
  std::optional<std::string> split;
};

// CSV with header (image_path,reference_path,mos[,split]) or JSON lines.
// Relative paths resolve against the manifest's directory.
std::vector<MosRow> load_manifest(const std::string& path);

struct ScoringOptions {
  std::string query = "What is the overall quality of this image?";
  bool include_literal = true;
  // Stand-in prediction for failed rows in the sensitivity view.
  double impute_score = 3.0;
  int workers = 1;
};

struct ScoringRow {
  MosRow row;
  bool ok = false;
  std::string error;
  double q_normalized = 0.0;
  double q_literal = 0.0;
  double q_uniform = 0.0;
  std::string state_digest;
};

struct ScoringReport {
  std::vector<ScoringRow> rows;
  json correlations;
  size_t failures = 0;

  json to_json() const;
  std::string to_csv() const;
};

// Throws kAllRowsFailed when no row could be scored.
ScoringReport run_scoring(const std::vector<MosRow>& manifest, Engine& engine,
                          const ScoringOptions& options = {});

// ---------------------------------------------------------------------------
// Multiple-choice benchmark

enum class McqTrack { kPlanner, kExecutorDistortion, kExecutorTool, kSummarizer };

std::string_view to_string(McqTrack track);
McqTrack parse_track(std::string_view s);

struct McqOption {
  char letter = 'A';
  std::string text;
};

struct McqItem {
  std::string id;
  McqTrack track = McqTrack::kPlanner;
  std::string question;
  std::vector<McqOption> options;
  char answer = 'A';
  std::string image_path;
  std::optional<std::string> reference_path;
  std::optional<std::string> context;
};

// Parses "A. text" / "(A) text" / "A) text" option labels.
McqOption parse_option(std::string_view labeled);

// Throws kLoadError for malformed items (answer letter not among options,
// fewer than 2 or more than 4 options).
std::vector<McqItem> load_mcq(const std::string& path);

// Tiers: JSON "final_answer" -> standalone letter pattern -> option text.
// Throws kNoChoiceFound.
char parse_choice(std::string_view model_text, const std::vector<McqOption>& options);

struct McqItemResult {
  std::string id;
  McqTrack track;
  char expected = 'A';
  std::optional<char> predicted;
  bool correct = false;
  std::string error;
};

struct McqReport {
  std::vector<McqItemResult> items;
  json to_json() const;
  double accuracy(std::optional<McqTrack> track = std::nullopt) const;
  size_t failures() const;
};

McqReport run_mcq(const std::vector<McqItem>& items, Engine& engine, int workers = 1);

// Builds the prompt run_mcq sends for an item (exposed for tests).
std::vector<ChatMessage> build_mcq_prompt(const McqItem& item, const QueryContext& ctx,
                                          const Engine& engine);

}  // namespace iqagent
