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

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "iqagent/image.hpp"

namespace iqagent {

using nlohmann::json;

inline constexpr std::string_view kGlobalScope = "Global";

// ---------------------------------------------------------------------------
// Enumerations

enum class QueryType { kIqa, kOther };
enum class DistortionSource { kExplicit, kInferred };
enum class ReferenceMode { kFullReference, kNoReference };
enum class AnswerKind { kScore, kChoice, kFreeText };

// The closed set of distortion categories the executor recognizes.
enum class Category {
  kBlurs,
  kColorDistortions,
  kCompression,
  kNoise,
  kBrightnessChange,
  kSharpness,
  kContrast,
};

inline constexpr Category kAllCategories[] = {
    Category::kBlurs,           Category::kColorDistortions, Category::kCompression,
    Category::kNoise,           Category::kBrightnessChange, Category::kSharpness,
    Category::kContrast,
};

std::string_view to_string(QueryType v);
std::string_view to_string(DistortionSource v);
std::string_view to_string(ReferenceMode v);
std::string_view to_string(AnswerKind v);
std::string_view to_string(Category v);

// Case-insensitive; tolerates singular/plural ("Blur", "Color distortion").
std::optional<Category> parse_category(std::string_view name);
QueryType parse_query_type(std::string_view s);
DistortionSource parse_distortion_source(std::string_view s);
ReferenceMode parse_reference_mode(std::string_view s);
AnswerKind parse_answer_kind(std::string_view s);

// ---------------------------------------------------------------------------
// Value types

struct DistortionCategory {
  Category name = Category::kBlurs;
  std::optional<std::string> subtype;

  friend bool operator==(const DistortionCategory&, const DistortionCategory&) = default;
};

class SeverityLevel {
 public:
  static constexpr int kMax = 4;

  constexpr SeverityLevel() = default;
  // Throws Error(kUnknownSeverity) outside 0..4.
  explicit SeverityLevel(int ordinal);

  constexpr int ordinal() const { return ordinal_; }
  std::string_view label() const;

  friend auto operator<=>(const SeverityLevel&, const SeverityLevel&) = default;

 private:
  int ordinal_ = 0;
};

// Canonical labels none/slight/moderate/severe/extreme; accepts the aliases
// mild/heavy and the 1..5 numeric scale.
SeverityLevel normalize_severity(std::string_view label);

class QualityLevel {
 public:
  constexpr QualityLevel() = default;
  explicit QualityLevel(int c);

  constexpr int value() const { return c_; }
  std::string_view label() const;
  // A = excellent ... E = bad.
  char letter() const;

  static QualityLevel from_label(std::string_view label);
  static QualityLevel from_letter(char letter);

  friend auto operator<=>(const QualityLevel&, const QualityLevel&) = default;

 private:
  int c_ = 3;
};

struct PlanFlags {
  bool distortion_detection = false;
  bool distortion_analysis = false;
  bool tool_selection = false;
  bool tool_execute = false;

  friend bool operator==(const PlanFlags&, const PlanFlags&) = default;
};

using DistortionMap = std::map<std::string, std::vector<DistortionCategory>>;

struct Plan {
  QueryType query_type = QueryType::kIqa;
  // Empty = Global.
  std::vector<std::string> query_scope;
  DistortionSource distortion_source = DistortionSource::kInferred;
  std::optional<DistortionMap> distortions;
  ReferenceMode reference_mode = ReferenceMode::kNoReference;
  std::optional<std::vector<std::string>> required_tools;
  PlanFlags flags;

  bool global_scope() const { return query_scope.empty(); }
  friend bool operator==(const Plan&, const Plan&) = default;
};

struct AnalysisEntry {
  std::string scope_key;
  DistortionCategory distortion;
  SeverityLevel severity;
  std::string rationale;

  friend bool operator==(const AnalysisEntry&, const AnalysisEntry&) = default;
};

struct ToolScore {
  std::string tool_name;
  std::optional<double> raw_score;
  std::optional<double> calibrated_score;
  std::optional<DistortionCategory> distortion_context;
  bool ok = false;
  std::string failure_reason;

  friend bool operator==(const ToolScore&, const ToolScore&) = default;
};

struct AssignmentKey {
  std::string scope_key;
  Category distortion = Category::kBlurs;

  friend auto operator<=>(const AssignmentKey&, const AssignmentKey&) = default;
};

struct TraceEntry {
  std::string stage;
  double wall_ms = 0.0;
  bool ok = true;
  std::string detail;
  std::string payload_digest;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

// Accumulated evidence handed from the executor to the summarizer.
struct IntermediateState {
  Plan plan;
  DistortionMap detections;
  std::vector<AnalysisEntry> analyses;
  std::map<AssignmentKey, std::string> assignments;
  std::vector<ToolScore> scores;
  std::vector<TraceEntry> trace;

  friend bool operator==(const IntermediateState&, const IntermediateState&) = default;
};

struct QueryContext {
  ImageHandle distorted_image;
  std::optional<ImageHandle> reference_image;
  std::string query_text;
  std::optional<std::vector<std::string>> user_tool_constraints;
};

struct FinalAnswer {
  AnswerKind answer_kind = AnswerKind::kFreeText;
  std::optional<double> score;
  std::optional<char> choice;
  std::string reasoning;
  std::string state_digest;
  json diagnostics = json::object();

  friend bool operator==(const FinalAnswer&, const FinalAnswer&) = default;
};

// Accepts a category name or a refinement that names its family
// ("Gaussian blur" -> Blurs / "Gaussian blur", "JPEG" -> Compression / "JPEG").
std::optional<DistortionCategory> parse_distortion_label(std::string_view label);

// ---------------------------------------------------------------------------
// Plan validation

enum class PlanViolationCode {
  kMissingExplicitDistortions,
  kExplicitDetectionEnabled,
  kNonIqaFlagSet,
  kUnknownScopeKey,
  kEmptySubtype,
  kEmptyScopeName,
};

std::string_view to_string(PlanViolationCode code);

struct PlanViolation {
  PlanViolationCode code;
  std::string detail;
};

std::vector<PlanViolation> validate_plan(const Plan& plan);

// Checks the cross-references inside an IntermediateState (assignments refer to
// known distortions, Ok scores refer to assigned or required tools).
std::vector<std::string> validate_state(const IntermediateState& state);

}  // namespace iqagent
