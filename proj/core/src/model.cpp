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

#include "iqagent/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include "iqagent/error.hpp"
#include "text.hpp"

namespace iqagent {

namespace {

constexpr std::array<std::string_view, 7> kCategoryNames = {
    "Blurs", "Color distortions", "Compression", "Noise", "Brightness change", "Sharpness",
    "Contrast"};

constexpr std::array<std::string_view, 5> kSeverityLabels = {"none", "slight", "moderate",
                                                            "severe", "extreme"};

constexpr std::array<std::string_view, 5> kQualityLabels = {"bad", "poor", "fair", "good",
                                                           "excellent"};

std::string strip_plural(std::string s) {
  if (s.size() > 1 && s.back() == 's') s.pop_back();
  return s;
}

// Lowercase with separators ('-', '_', ' ') removed.
std::string squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_' || std::isspace(static_cast<unsigned char>(c))) continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::string_view to_string(QueryType v) { return v == QueryType::kIqa ? "IQA" : "Other"; }

std::string_view to_string(DistortionSource v) {
  return v == DistortionSource::kExplicit ? "Explicit" : "Inferred";
}

std::string_view to_string(ReferenceMode v) {
  return v == ReferenceMode::kFullReference ? "Full-Reference" : "No-Reference";
}

std::string_view to_string(AnswerKind v) {
  switch (v) {
    case AnswerKind::kScore: return "Score";
    case AnswerKind::kChoice: return "Choice";
    case AnswerKind::kFreeText: return "FreeText";
  }
  return "FreeText";
}

std::string_view to_string(Category v) { return kCategoryNames[static_cast<size_t>(v)]; }

std::optional<Category> parse_category(std::string_view name) {
  std::string key = strip_plural(text::lower(text::trim(name)));
  if (key == "colour distortion") key = "color distortion";
  if (key.empty()) return std::nullopt;
  for (size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (strip_plural(text::lower(kCategoryNames[i])) == key) return static_cast<Category>(i);
  }
  return std::nullopt;
}

std::optional<DistortionCategory> parse_distortion_label(std::string_view label) {
  const auto trimmed = text::trim(label);
  if (auto c = parse_category(trimmed)) return DistortionCategory{*c, std::nullopt};
  struct Stem {
    std::string_view word;
    Category category;
  };
  static constexpr Stem kStems[] = {
      {"blur", Category::kBlurs},          {"blurs", Category::kBlurs},
      {"blurry", Category::kBlurs},        {"defocus", Category::kBlurs},
      {"color", Category::kColorDistortions}, {"colour", Category::kColorDistortions},
      {"saturation", Category::kColorDistortions},
      {"jpeg", Category::kCompression},    {"jpeg2000", Category::kCompression},
      {"compression", Category::kCompression}, {"blocking", Category::kCompression},
      {"noise", Category::kNoise},         {"grain", Category::kNoise},
      {"brightness", Category::kBrightnessChange}, {"brighten", Category::kBrightnessChange},
      {"darken", Category::kBrightnessChange}, {"exposure", Category::kBrightnessChange},
      {"sharpness", Category::kSharpness}, {"sharpen", Category::kSharpness},
      {"contrast", Category::kContrast},
  };
  const auto ws = text::words(trimmed);
  for (const auto& w : ws) {
    for (const auto& stem : kStems) {
      if (w == stem.word) return DistortionCategory{stem.category, std::string(trimmed)};
    }
  }
  return std::nullopt;
}

QueryType parse_query_type(std::string_view s) {
  const auto k = squash(s);
  if (k == "iqa") return QueryType::kIqa;
  if (k == "other") return QueryType::kOther;
  throw Error(Errc::kSchemaViolation, "unknown query_type '" + std::string(s) + "'");
}

DistortionSource parse_distortion_source(std::string_view s) {
  const auto k = squash(s);
  // "explict" is how the planner prompt spells it.
  if (k == "explicit" || k == "explict") return DistortionSource::kExplicit;
  if (k == "inferred") return DistortionSource::kInferred;
  throw Error(Errc::kSchemaViolation, "unknown distortion_source '" + std::string(s) + "'");
}

ReferenceMode parse_reference_mode(std::string_view s) {
  const auto k = squash(s);
  if (k == "fullreference" || k == "fr") return ReferenceMode::kFullReference;
  if (k == "noreference" || k == "nr") return ReferenceMode::kNoReference;
  throw Error(Errc::kSchemaViolation, "unknown reference_mode '" + std::string(s) + "'");
}

AnswerKind parse_answer_kind(std::string_view s) {
  const auto k = squash(s);
  if (k == "score") return AnswerKind::kScore;
  if (k == "choice") return AnswerKind::kChoice;
  if (k == "freetext" || k == "text") return AnswerKind::kFreeText;
  throw Error(Errc::kSchemaViolation, "unknown answer_kind '" + std::string(s) + "'");
}

SeverityLevel::SeverityLevel(int ordinal) : ordinal_(ordinal) {
  if (ordinal < 0 || ordinal > kMax) {
    throw Error(Errc::kUnknownSeverity, "severity ordinal out of range: " + std::to_string(ordinal));
  }
}

std::string_view SeverityLevel::label() const { return kSeverityLabels[ordinal_]; }

SeverityLevel normalize_severity(std::string_view label) {
  const std::string key = text::lower(text::trim(label));
  if (key.empty()) throw Error(Errc::kUnknownSeverity, "empty severity label");
  for (size_t i = 0; i < kSeverityLabels.size(); ++i) {
    if (key == kSeverityLabels[i]) return SeverityLevel(static_cast<int>(i));
  }
  if (key == "mild") return SeverityLevel(1);
  if (key == "heavy") return SeverityLevel(3);
  // 1..5 numeric scale (1 = none).
  if (key.size() == 1 && key[0] >= '1' && key[0] <= '5') return SeverityLevel(key[0] - '1');
  throw Error(Errc::kUnknownSeverity, "unknown severity '" + std::string(label) + "'");
}

QualityLevel::QualityLevel(int c) : c_(c) {
  if (c < 1 || c > 5) throw Error(Errc::kSchemaViolation, "quality level out of range");
}

std::string_view QualityLevel::label() const { return kQualityLabels[c_ - 1]; }

char QualityLevel::letter() const { return static_cast<char>('A' + (5 - c_)); }

QualityLevel QualityLevel::from_label(std::string_view label) {
  const std::string key = text::lower(text::trim(label));
  for (size_t i = 0; i < kQualityLabels.size(); ++i) {
    if (key == kQualityLabels[i]) return QualityLevel(static_cast<int>(i) + 1);
  }
  throw Error(Errc::kSchemaViolation, "unknown quality level '" + std::string(label) + "'");
}

QualityLevel QualityLevel::from_letter(char letter) {
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
  if (up < 'A' || up > 'E') {
    throw Error(Errc::kSchemaViolation, std::string("unknown quality letter '") + letter + "'");
  }
  return QualityLevel(5 - (up - 'A'));
}

std::string_view to_string(PlanViolationCode code) {
  switch (code) {
    case PlanViolationCode::kMissingExplicitDistortions: return "MissingExplicitDistortions";
    case PlanViolationCode::kExplicitDetectionEnabled: return "ExplicitDetectionEnabled";
    case PlanViolationCode::kNonIqaFlagSet: return "NonIqaFlagSet";
    case PlanViolationCode::kUnknownScopeKey: return "UnknownScopeKey";
    case PlanViolationCode::kEmptySubtype: return "EmptySubtype";
    case PlanViolationCode::kEmptyScopeName: return "EmptyScopeName";
  }
  return "Unknown";
}

std::vector<PlanViolation> validate_plan(const Plan& plan) {
  std::vector<PlanViolation> out;
  auto add = [&](PlanViolationCode code, std::string detail) {
    out.push_back({code, std::move(detail)});
  };

  bool has_distortions = false;
  if (plan.distortions) {
    for (const auto& [key, list] : *plan.distortions) has_distortions |= !list.empty();
  }
  if (plan.distortion_source == DistortionSource::kExplicit) {
    if (!has_distortions) {
      add(PlanViolationCode::kMissingExplicitDistortions,
          "explicit distortion source requires a non-empty distortions map");
    }
    if (plan.flags.distortion_detection) {
      add(PlanViolationCode::kExplicitDetectionEnabled,
          "explicit distortions must disable distortion_detection");
    }
  }
  if (plan.query_type == QueryType::kOther) {
    const auto& f = plan.flags;
    if (f.distortion_detection || f.distortion_analysis || f.tool_selection || f.tool_execute) {
      add(PlanViolationCode::kNonIqaFlagSet, "non-IQA plans must disable every sub-task");
    }
  }
  for (const auto& name : plan.query_scope) {
    if (text::trim(name).empty()) add(PlanViolationCode::kEmptyScopeName, "empty object name");
  }
  if (plan.distortions) {
    for (const auto& [key, list] : *plan.distortions) {
      const bool known = key == kGlobalScope ||
                         std::find(plan.query_scope.begin(), plan.query_scope.end(), key) !=
                             plan.query_scope.end();
      if (!known) add(PlanViolationCode::kUnknownScopeKey, "distortion key '" + key + "'");
      for (const auto& d : list) {
        if (d.subtype && text::trim(*d.subtype).empty()) {
          add(PlanViolationCode::kEmptySubtype, "empty subtype under '" + key + "'");
        }
      }
    }
  }
  return out;
}

std::vector<std::string> validate_state(const IntermediateState& state) {
  std::vector<std::string> out;
  auto known_distortion = [&](const AssignmentKey& key) {
    auto in = [&](const DistortionMap& m) {
      auto it = m.find(key.scope_key);
      if (it == m.end()) return false;
      return std::any_of(it->second.begin(), it->second.end(),
                         [&](const DistortionCategory& d) { return d.name == key.distortion; });
    };
    return in(state.detections) || (state.plan.distortions && in(*state.plan.distortions));
  };
  std::set<std::string> assigned;
  for (const auto& [key, tool] : state.assignments) {
    assigned.insert(tool);
    if (!known_distortion(key)) {
      out.push_back("assignment for unknown distortion " + key.scope_key + "/" +
                    std::string(to_string(key.distortion)));
    }
  }
  if (state.plan.required_tools) {
    assigned.insert(state.plan.required_tools->begin(), state.plan.required_tools->end());
  }
  for (const auto& s : state.scores) {
    if (s.ok && !assigned.contains(s.tool_name)) {
      out.push_back("score from unassigned tool " + s.tool_name);
    }
    if (s.ok != s.calibrated_score.has_value()) {
      out.push_back("calibrated score presence disagrees with status for " + s.tool_name);
    }
  }
  return out;
}

}  // namespace iqagent
