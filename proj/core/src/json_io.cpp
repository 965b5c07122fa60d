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

#include "iqagent/json_io.hpp"

#include <initializer_list>
#include <regex>
#include <set>

#include "iqagent/error.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

namespace iqagent {

namespace {

void check_fields(const json& j, std::initializer_list<std::string_view> allowed, ParseMode mode,
                  std::string_view type) {
  if (!j.is_object()) {
    throw Error(Errc::kSchemaViolation, std::string(type) + ": expected a JSON object");
  }
  if (mode == ParseMode::kLenient) return;
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known |= (a == key);
    if (!known) {
      throw Error(Errc::kUnknownField, std::string(type) + ": unknown field '" + key + "'");
    }
  }
}

const json& require(const json& j, const char* key, std::string_view type) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw Error(Errc::kSchemaViolation,
                std::string(type) + ": missing field '" + key + "'");
  }
  return *it;
}

bool present(const json& j, const char* key) {
  auto it = j.find(key);
  return it != j.end() && !it->is_null();
}

std::string get_string(const json& j, const char* key, std::string_view type) {
  const auto& v = require(j, key, type);
  if (!v.is_string()) {
    throw Error(Errc::kSchemaViolation, std::string(type) + ": '" + key + "' must be a string");
  }
  return v.get<std::string>();
}

double get_number(const json& v, std::string_view what) {
  if (!v.is_number()) {
    throw Error(Errc::kSchemaViolation, std::string(what) + " must be a number");
  }
  return v.get<double>();
}

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json encode_image(const ImageHandle& h) {
  return {{"path", h.path()}, {"format", h.format()}, {"data", base64_encode(h.encoded())}};
}

ImageHandle decode_image_handle(const json& j, ParseMode mode) {
  check_fields(j, {"path", "format", "data", "digest"}, mode, "image");
  std::string path = j.value("path", "");
  if (present(j, "data")) return ImageHandle::from_bytes(base64_decode(get_string(j, "data", "image")), path);
  if (!path.empty()) return ImageHandle::from_file(path);
  throw Error(Errc::kSchemaViolation, "image: needs 'data' or 'path'");
}

}  // namespace

// ---------------------------------------------------------------------------

json encode(const DistortionCategory& v) {
  return {{"name", to_string(v.name)}, {"subtype", opt(v.subtype)}};
}

template <>
DistortionCategory decode<DistortionCategory>(const json& j, ParseMode mode) {
  if (j.is_string()) {
    auto d = parse_distortion_label(j.get<std::string>());
    if (!d) throw Error(Errc::kUnknownCategory, "unknown distortion '" + j.get<std::string>() + "'");
    return *d;
  }
  check_fields(j, {"name", "subtype"}, mode, "DistortionCategory");
  const auto name = get_string(j, "name", "DistortionCategory");
  auto c = parse_category(name);
  if (!c) throw Error(Errc::kUnknownCategory, "unknown distortion category '" + name + "'");
  DistortionCategory out{*c, std::nullopt};
  if (present(j, "subtype")) {
    out.subtype = get_string(j, "subtype", "DistortionCategory");
    if (text::trim(*out.subtype).empty()) {
      throw Error(Errc::kSchemaViolation, "DistortionCategory: empty subtype");
    }
  }
  return out;
}

json encode(const SeverityLevel& v) { return std::string(v.label()); }

template <>
SeverityLevel decode<SeverityLevel>(const json& j, ParseMode) {
  if (j.is_number_integer()) return SeverityLevel(j.get<int>());
  if (j.is_string()) return normalize_severity(j.get<std::string>());
  throw Error(Errc::kUnknownSeverity, "severity must be a label or ordinal");
}

json encode(const QualityLevel& v) { return v.value(); }

template <>
QualityLevel decode<QualityLevel>(const json& j, ParseMode) {
  if (j.is_number_integer()) return QualityLevel(j.get<int>());
  if (j.is_string()) {
    const auto s = std::string(text::trim(j.get<std::string>()));
    if (s.size() == 1) return QualityLevel::from_letter(s[0]);
    return QualityLevel::from_label(s);
  }
  throw Error(Errc::kSchemaViolation, "quality level must be 1..5, a label or a letter");
}

json encode(const PlanFlags& v) {
  return {{"distortion_detection", v.distortion_detection},
          {"distortion_analysis", v.distortion_analysis},
          {"tool_selection", v.tool_selection},
          {"tool_execute", v.tool_execute}};
}

template <>
PlanFlags decode<PlanFlags>(const json& j, ParseMode mode) {
  check_fields(j, {"distortion_detection", "distortion_analysis", "tool_selection", "tool_execute"},
               mode, "PlanFlags");
  auto flag = [&](const char* key) {
    const auto& v = require(j, key, "PlanFlags");
    if (!v.is_boolean()) {
      throw Error(Errc::kSchemaViolation, std::string("PlanFlags: '") + key + "' must be boolean");
    }
    return v.get<bool>();
  };
  return {flag("distortion_detection"), flag("distortion_analysis"), flag("tool_selection"),
          flag("tool_execute")};
}

json encode(const DistortionMap& v) {
  json out = json::object();
  for (const auto& [key, list] : v) {
    json arr = json::array();
    for (const auto& d : list) arr.push_back(encode(d));
    out[key] = std::move(arr);
  }
  return out;
}

template <>
DistortionMap decode<DistortionMap>(const json& j, ParseMode mode) {
  if (!j.is_object()) throw Error(Errc::kSchemaViolation, "distortions must be an object");
  DistortionMap out;
  for (const auto& [key, list] : j.items()) {
    // The prompts write "global"; the canonical key is "Global".
    const std::string scope = text::iequals(key, kGlobalScope) ? std::string(kGlobalScope) : key;
    auto& dst = out[scope];
    const json arr = list.is_array() ? list : json::array({list});
    for (const auto& d : arr) {
      try {
        dst.push_back(decode<DistortionCategory>(d, mode));
      } catch (const Error& e) {
        // Lenient parsing drops labels outside the closed category set.
        if (mode == ParseMode::kStrict || e.code() != Errc::kUnknownCategory) throw;
      }
    }
    if (dst.empty() && mode == ParseMode::kLenient) out.erase(scope);
  }
  return out;
}

json encode(const Plan& v) {
  json scope = v.query_scope.empty() ? json(std::string(kGlobalScope)) : json(v.query_scope);
  return {{"query_type", to_string(v.query_type)},
          {"query_scope", std::move(scope)},
          {"distortion_source", to_string(v.distortion_source)},
          {"distortions", v.distortions ? encode(*v.distortions) : json(nullptr)},
          {"reference_mode", to_string(v.reference_mode)},
          {"required_tools", opt(v.required_tools)},
          {"flags", encode(v.flags)}};
}

template <>
Plan decode<Plan>(const json& raw, ParseMode mode) {
  // Field aliases: the planner prompt ("required_tool", "plan") and the
  // instruction-generation schema ("task_type", "reference_type", ...).
  static const std::pair<const char*, const char*> kAliases[] = {
      {"required_tool", "required_tools"},
      {"plan", "flags"},
      {"task_type", "query_type"},
      {"reference_type", "reference_mode"},
      {"required_object_names", "query_scope"},
      {"required_distortions", "distortions"},
  };
  if (!raw.is_object()) throw Error(Errc::kSchemaViolation, "Plan: expected a JSON object");
  json j = json::object();
  for (const auto& [key, value] : raw.items()) {
    std::string k = key;
    for (const auto& [alias, canonical] : kAliases) {
      if (k == alias) k = canonical;
    }
    j[k] = value;
  }
  check_fields(j,
               {"query_type", "query_scope", "distortion_source", "distortions", "reference_mode",
                "required_tools", "flags"},
               mode, "Plan");
  Plan p;
  p.query_type = parse_query_type(get_string(j, "query_type", "Plan"));
  if (present(j, "query_scope")) {
    const auto& s = j["query_scope"];
    if (s.is_string()) {
      if (!text::iequals(s.get<std::string>(), kGlobalScope)) p.query_scope = {s.get<std::string>()};
    } else if (s.is_array()) {
      for (const auto& o : s) {
        if (!o.is_string()) throw Error(Errc::kSchemaViolation, "Plan: query_scope entries must be strings");
        if (text::iequals(o.get<std::string>(), kGlobalScope)) continue;
        p.query_scope.push_back(o.get<std::string>());
      }
    } else {
      throw Error(Errc::kSchemaViolation, "Plan: query_scope must be \"Global\" or a list");
    }
  }
  p.distortion_source = present(j, "distortion_source")
                            ? parse_distortion_source(get_string(j, "distortion_source", "Plan"))
                            : DistortionSource::kInferred;
  if (present(j, "distortions")) {
    p.distortions = decode<DistortionMap>(j["distortions"], mode);
    if (p.distortions->empty()) p.distortions.reset();
  }
  p.reference_mode = present(j, "reference_mode")
                         ? parse_reference_mode(get_string(j, "reference_mode", "Plan"))
                         : ReferenceMode::kNoReference;
  if (present(j, "required_tools")) {
    const auto& t = j["required_tools"];
    std::vector<std::string> tools;
    if (t.is_string()) {
      tools.push_back(t.get<std::string>());
    } else if (t.is_array()) {
      for (const auto& x : t) {
        if (!x.is_string()) throw Error(Errc::kSchemaViolation, "Plan: tool names must be strings");
        tools.push_back(x.get<std::string>());
      }
    } else {
      throw Error(Errc::kSchemaViolation, "Plan: required_tools must be a list");
    }
    if (!tools.empty()) p.required_tools = std::move(tools);
  }
  p.flags = decode<PlanFlags>(require(j, "flags", "Plan"), mode);
  return p;
}

json encode(const AnalysisEntry& v) {
  return {{"scope_key", v.scope_key},
          {"distortion", encode(v.distortion)},
          {"severity", encode(v.severity)},
          {"rationale", v.rationale}};
}

template <>
AnalysisEntry decode<AnalysisEntry>(const json& j, ParseMode mode) {
  check_fields(j, {"scope_key", "distortion", "severity", "rationale"}, mode, "AnalysisEntry");
  AnalysisEntry e;
  e.scope_key = get_string(j, "scope_key", "AnalysisEntry");
  e.distortion = decode<DistortionCategory>(require(j, "distortion", "AnalysisEntry"), mode);
  e.severity = decode<SeverityLevel>(require(j, "severity", "AnalysisEntry"), mode);
  e.rationale = j.value("rationale", "");
  if (e.severity.ordinal() > 0 && text::trim(e.rationale).empty()) {
    throw Error(Errc::kSchemaViolation, "AnalysisEntry: rationale required when severity > none");
  }
  return e;
}

json encode(const ToolScore& v) {
  return {{"tool_name", v.tool_name},
          {"raw_score", opt(v.raw_score)},
          {"calibrated_score", opt(v.calibrated_score)},
          {"distortion_context", v.distortion_context ? encode(*v.distortion_context) : json(nullptr)},
          {"status", v.ok ? "Ok" : "Failed"},
          {"failure_reason", v.ok ? json(nullptr) : json(v.failure_reason)}};
}

template <>
ToolScore decode<ToolScore>(const json& j, ParseMode mode) {
  check_fields(j,
               {"tool_name", "raw_score", "calibrated_score", "distortion_context", "status",
                "failure_reason"},
               mode, "ToolScore");
  ToolScore s;
  s.tool_name = get_string(j, "tool_name", "ToolScore");
  if (present(j, "raw_score")) s.raw_score = get_number(j["raw_score"], "raw_score");
  if (present(j, "calibrated_score")) s.calibrated_score = get_number(j["calibrated_score"], "calibrated_score");
  if (present(j, "distortion_context")) {
    s.distortion_context = decode<DistortionCategory>(j["distortion_context"], mode);
  }
  const auto status = get_string(j, "status", "ToolScore");
  if (status != "Ok" && status != "Failed") {
    throw Error(Errc::kSchemaViolation, "ToolScore: status must be Ok or Failed");
  }
  s.ok = status == "Ok";
  if (present(j, "failure_reason")) s.failure_reason = get_string(j, "failure_reason", "ToolScore");
  if (s.ok != s.calibrated_score.has_value()) {
    throw Error(Errc::kSchemaViolation, "ToolScore: calibrated_score must be present iff Ok");
  }
  if (s.calibrated_score && (*s.calibrated_score < 1.0 || *s.calibrated_score > 5.0)) {
    throw Error(Errc::kSchemaViolation, "ToolScore: calibrated_score outside [1, 5]");
  }
  return s;
}

json encode(const TraceEntry& v) {
  return {{"stage", v.stage},
          {"wall_ms", v.wall_ms},
          {"ok", v.ok},
          {"detail", v.detail},
          {"payload_digest", v.payload_digest}};
}

template <>
TraceEntry decode<TraceEntry>(const json& j, ParseMode mode) {
  check_fields(j, {"stage", "wall_ms", "ok", "detail", "payload_digest"}, mode, "TraceEntry");
  TraceEntry t;
  t.stage = get_string(j, "stage", "TraceEntry");
  t.wall_ms = j.contains("wall_ms") ? get_number(j["wall_ms"], "wall_ms") : 0.0;
  t.ok = j.value("ok", true);
  t.detail = j.value("detail", "");
  t.payload_digest = j.value("payload_digest", "");
  return t;
}

json encode(const IntermediateState& v) {
  json assignments = json::object();
  for (const auto& [key, tool] : v.assignments) {
    assignments[key.scope_key][std::string(to_string(key.distortion))] = tool;
  }
  json analyses = json::array();
  for (const auto& a : v.analyses) analyses.push_back(encode(a));
  json scores = json::array();
  for (const auto& s : v.scores) scores.push_back(encode(s));
  json trace = json::array();
  for (const auto& t : v.trace) trace.push_back(encode(t));
  return {{"plan", encode(v.plan)},
          {"detections", encode(v.detections)},
          {"analyses", std::move(analyses)},
          {"assignments", std::move(assignments)},
          {"scores", std::move(scores)},
          {"trace", std::move(trace)}};
}

template <>
IntermediateState decode<IntermediateState>(const json& j, ParseMode mode) {
  check_fields(j, {"plan", "detections", "analyses", "assignments", "scores", "trace"}, mode,
               "IntermediateState");
  IntermediateState s;
  s.plan = decode<Plan>(require(j, "plan", "IntermediateState"), mode);
  if (present(j, "detections")) s.detections = decode<DistortionMap>(j["detections"], mode);
  for (const auto& a : j.value("analyses", json::array())) s.analyses.push_back(decode<AnalysisEntry>(a, mode));
  if (present(j, "assignments")) {
    for (const auto& [scope, inner] : j["assignments"].items()) {
      for (const auto& [dist, tool] : inner.items()) {
        auto c = parse_category(dist);
        if (!c) throw Error(Errc::kUnknownCategory, "assignment for unknown category '" + dist + "'");
        s.assignments[{scope, *c}] = tool.get<std::string>();
      }
    }
  }
  for (const auto& x : j.value("scores", json::array())) s.scores.push_back(decode<ToolScore>(x, mode));
  for (const auto& x : j.value("trace", json::array())) s.trace.push_back(decode<TraceEntry>(x, mode));
  return s;
}

json encode(const FinalAnswer& v) {
  return {{"answer_kind", to_string(v.answer_kind)},
          {"score", opt(v.score)},
          {"choice", v.choice ? json(std::string(1, *v.choice)) : json(nullptr)},
          {"reasoning", v.reasoning},
          {"state_digest", v.state_digest},
          {"diagnostics", v.diagnostics}};
}

template <>
FinalAnswer decode<FinalAnswer>(const json& j, ParseMode mode) {
  check_fields(j, {"answer_kind", "score", "choice", "reasoning", "state_digest", "diagnostics"},
               mode, "FinalAnswer");
  FinalAnswer a;
  a.answer_kind = parse_answer_kind(get_string(j, "answer_kind", "FinalAnswer"));
  if (present(j, "score")) a.score = get_number(j["score"], "score");
  if (present(j, "choice")) {
    const auto c = get_string(j, "choice", "FinalAnswer");
    if (c.size() != 1) throw Error(Errc::kSchemaViolation, "FinalAnswer: choice must be one letter");
    a.choice = c[0];
  }
  a.reasoning = get_string(j, "reasoning", "FinalAnswer");
  a.state_digest = j.value("state_digest", "");
  if (j.contains("diagnostics")) a.diagnostics = j["diagnostics"];
  if (a.answer_kind == AnswerKind::kScore && (!a.score || a.choice)) {
    throw Error(Errc::kSchemaViolation, "FinalAnswer: Score answers carry exactly a score");
  }
  if (a.answer_kind == AnswerKind::kChoice && (!a.choice || a.score)) {
    throw Error(Errc::kSchemaViolation, "FinalAnswer: Choice answers carry exactly a choice");
  }
  if (text::trim(a.reasoning).empty()) {
    throw Error(Errc::kSchemaViolation, "FinalAnswer: reasoning must be non-empty");
  }
  return a;
}

json encode(const QueryContext& v) {
  return {{"distorted_image", encode_image(v.distorted_image)},
          {"reference_image", v.reference_image ? encode_image(*v.reference_image) : json(nullptr)},
          {"query_text", v.query_text},
          {"user_tool_constraints", opt(v.user_tool_constraints)}};
}

template <>
QueryContext decode<QueryContext>(const json& j, ParseMode mode) {
  check_fields(j, {"distorted_image", "reference_image", "query_text", "user_tool_constraints"},
               mode, "QueryContext");
  QueryContext c;
  c.distorted_image = decode_image_handle(require(j, "distorted_image", "QueryContext"), mode);
  if (present(j, "reference_image")) c.reference_image = decode_image_handle(j["reference_image"], mode);
  c.query_text = get_string(j, "query_text", "QueryContext");
  if (present(j, "user_tool_constraints")) {
    c.user_tool_constraints = j["user_tool_constraints"].get<std::vector<std::string>>();
  }
  return c;
}

std::string state_digest(const IntermediateState& state) {
  json j = encode(state);
  for (auto& t : j["trace"]) t.erase("wall_ms");
  return sha256_hex(j.dump());
}

std::optional<json> extract_json_object(std::string_view text) {
  auto try_parse = [](std::string_view s) -> std::optional<json> {
    auto j = json::parse(s.begin(), s.end(), nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
    // Trailing commas are the most common defect in model-written JSON.
    static const std::regex kTrailingComma(R"(,(\s*[}\]]))");
    const std::string fixed = std::regex_replace(std::string(s), kTrailingComma, "$1");
    j = json::parse(fixed, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
    return std::nullopt;
  };

  if (auto j = try_parse(text::trim(text))) return j;

  size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string_view::npos) {
    size_t body = pos + 3;
    const size_t line_end = text.find('\n', body);
    const size_t close = text.find("```", body);
    if (close == std::string_view::npos) break;
    if (line_end != std::string_view::npos && line_end < close) {
      const auto tag = text::trim(text.substr(body, line_end - body));
      if (tag.empty() || tag == "json" || tag == "JSON") body = line_end + 1;
    }
    if (auto j = try_parse(text.substr(body, close - body))) return j;
    pos = close + 3;
  }

  // Balanced-brace scan from each opening brace.
  for (size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escape = false;
    for (size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (escape) {
        escape = false;
        continue;
      }
      if (in_string) {
        if (c == '\\') escape = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          if (auto j = try_parse(text.substr(start, i - start + 1))) return j;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace iqagent
