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

#include "iqagent/summarizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "iqagent/error.hpp"
#include "iqagent/json_io.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

namespace iqagent {

std::string_view to_string(FusionMode mode) {
  return mode == FusionMode::kLiteral ? "Literal" : "Normalized";
}

FusionMode parse_fusion_mode(std::string_view s) {
  const auto k = text::lower(text::trim(s));
  if (k == "literal") return FusionMode::kLiteral;
  if (k == "normalized") return FusionMode::kNormalized;
  throw Error(Errc::kConfig, "unknown fusion mode '" + std::string(s) + "'");
}

namespace {

std::array<double, 5> softmax5(const std::array<double, 5>& logits) {
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::array<double, 5> out{};
  double z = 0.0;
  for (int i = 0; i < 5; ++i) z += out[i] = std::exp(logits[i] - hi);
  for (auto& v : out) v /= z;
  return out;
}

}  // namespace

std::array<double, 5> hvs_weights(double q_bar, double eta) {
  if (!std::isfinite(q_bar)) throw Error(Errc::kNonFiniteInput, "mean tool score is not finite");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw Error(Errc::kNonFiniteInput, "eta must be positive and finite");
  std::array<double, 5> logits{};
  for (int c = 1; c <= 5; ++c) logits[c - 1] = -eta * (q_bar - c) * (q_bar - c);
  return softmax5(logits);
}

std::array<double, 5> level_softmax(const std::map<int, double>& logprobs) {
  std::array<double, 5> logits{};
  for (int c = 1; c <= 5; ++c) {
    auto it = logprobs.find(c);
    if (it == logprobs.end()) {
      throw Error(Errc::kBackendUnsupported, "log-probability missing for level " + std::to_string(c));
    }
    if (std::isnan(it->second) || it->second == std::numeric_limits<double>::infinity()) {
      throw Error(Errc::kNonFiniteInput, "log-probability is not a number");
    }
    logits[c - 1] = it->second;
  }
  if (std::all_of(logits.begin(), logits.end(), [](double v) { return std::isinf(v); })) {
    throw Error(Errc::kNonFiniteInput, "every level has zero probability");
  }
  return softmax5(logits);
}

double uniform_average_score(const std::array<double, 5>& p) {
  double q = 0.0;
  for (int c = 1; c <= 5; ++c) q += p[c - 1] * c;
  return q;
}

FusionResult fuse_scores(const FusionInputs& in, FusionMode mode) {
  if (in.tool_scores.empty()) throw Error(Errc::kEmptyScores, "no tool scores to fuse");
  for (double s : in.tool_scores) {
    if (!std::isfinite(s)) throw Error(Errc::kNonFiniteInput, "tool score is not finite");
  }
  FusionResult r;
  auto& d = r.diagnostics;
  d.q_bar = std::accumulate(in.tool_scores.begin(), in.tool_scores.end(), 0.0) /
            static_cast<double>(in.tool_scores.size());
  d.alpha = hvs_weights(d.q_bar, in.eta);
  d.p = level_softmax(in.level_logprobs);

  // Normalized weights in the log domain so tiny alpha*p products do not underflow.
  std::array<double, 5> joint{};
  for (int c = 1; c <= 5; ++c) {
    d.q_literal += d.alpha[c - 1] * d.p[c - 1] * c;
    joint[c - 1] = std::log(d.alpha[c - 1]) + std::log(d.p[c - 1]);
  }
  if (std::all_of(joint.begin(), joint.end(), [](double v) { return std::isinf(v); })) {
    // Disjoint supports: fall back on the nearest level to q_bar.
    d.q_normalized = std::clamp(std::round(d.q_bar), 1.0, 5.0);
  } else {
    const auto w = softmax5(joint);
    d.q_normalized = uniform_average_score(w);
  }
  d.q_uniform = uniform_average_score(d.p);
  r.q = mode == FusionMode::kLiteral ? d.q_literal : d.q_normalized;
  return r;
}

json encode(const FusionDiagnostics& d) {
  return {{"q_bar", d.q_bar},         {"alpha", d.alpha},
          {"p", d.p},                 {"q_literal", d.q_literal},
          {"q_normalized", d.q_normalized}, {"q_uniform", d.q_uniform}};
}

// ---------------------------------------------------------------------------

SufficiencyResult sufficiency_check(const IntermediateState& state, AnswerKind kind,
                                    bool logprobs_available) {
  SufficiencyResult r;
  if (state.plan.query_type == QueryType::kOther) return r;

  const bool score_ok =
      logprobs_available || std::any_of(state.scores.begin(), state.scores.end(),
                                        [](const ToolScore& s) { return s.ok; });
  std::vector<std::string> uncovered;
  auto covered = [&](const std::string& scope) {
    return std::any_of(state.analyses.begin(), state.analyses.end(),
                       [&](const AnalysisEntry& a) { return a.scope_key == scope; });
  };
  if (state.plan.global_scope()) {
    if (!covered(std::string(kGlobalScope))) uncovered.push_back("analysis:" + std::string(kGlobalScope));
  } else {
    for (const auto& s : state.plan.query_scope) {
      if (!covered(s)) uncovered.push_back("analysis:" + s);
    }
  }

  switch (kind) {
    case AnswerKind::kScore:
      if (!score_ok) r.missing.push_back("tool_score");
      break;
    case AnswerKind::kFreeText:
      r.missing = uncovered;
      break;
    case AnswerKind::kChoice:
      if (!score_ok && !uncovered.empty()) {
        r.missing.push_back("tool_score");
        r.missing.insert(r.missing.end(), uncovered.begin(), uncovered.end());
      }
      break;
  }
  r.sufficient = r.missing.empty();
  return r;
}

void merge_state(IntermediateState& into, const IntermediateState& extra) {
  for (const auto& [scope, list] : extra.detections) {
    auto& dst = into.detections[scope];
    for (const auto& d : list) {
      if (std::none_of(dst.begin(), dst.end(), [&](const DistortionCategory& x) { return x.name == d.name; })) {
        dst.push_back(d);
      }
    }
  }
  for (const auto& a : extra.analyses) {
    const bool seen = std::any_of(into.analyses.begin(), into.analyses.end(), [&](const AnalysisEntry& x) {
      return x.scope_key == a.scope_key && x.distortion.name == a.distortion.name;
    });
    if (!seen) into.analyses.push_back(a);
  }
  for (const auto& [key, tool] : extra.assignments) into.assignments.emplace(key, tool);
  for (const auto& s : extra.scores) {
    auto it = std::find_if(into.scores.begin(), into.scores.end(),
                           [&](const ToolScore& x) { return x.tool_name == s.tool_name; });
    if (it == into.scores.end()) {
      into.scores.push_back(s);
    } else if (!it->ok && s.ok) {
      *it = s;
    }
  }
  std::sort(into.scores.begin(), into.scores.end(),
            [](const ToolScore& a, const ToolScore& b) { return a.tool_name < b.tool_name; });
  into.trace.insert(into.trace.end(), extra.trace.begin(), extra.trace.end());
}

IntermediateState Summarizer::reflect_loop(const QueryContext& ctx, IntermediateState state,
                                           AnswerKind kind, bool logprobs_available,
                                           const Planner& planner, Executor& executor,
                                           ReflectionOutcome* outcome) const {
  auto check = sufficiency_check(state, kind, logprobs_available);
  int rounds = 0;
  while (!check.sufficient && rounds < config_.max_rounds) {
    ++rounds;
    const auto t0 = std::chrono::steady_clock::now();
    auto replanned = planner.plan(ctx, check.missing);
    IntermediateState extra;
    extra.trace = std::move(replanned.trace);
    const Plan& np = replanned.plan;

    for (const auto& item : check.missing) {
      if (item.rfind("analysis:", 0) == 0) {
        const auto scope = item.substr(9);
        Plan p = np;
        p.query_type = QueryType::kIqa;
        p.query_scope = scope == kGlobalScope ? std::vector<std::string>{} : std::vector<std::string>{scope};
        std::optional<std::vector<DistortionCategory>> known;
        for (const DistortionMap* m : std::initializer_list<const DistortionMap*>{np.distortions ? &*np.distortions : nullptr,
                              state.plan.distortions ? &*state.plan.distortions : nullptr, &state.detections}) {
          if (!m || known) continue;
          auto it = m->find(scope);
          if (it != m->end() && !it->second.empty()) known = it->second;
        }
        p.distortions.reset();
        if (known) p.distortions = DistortionMap{{scope, *known}};
        p.flags = {!known.has_value(), true, false, false};
        const auto det = p.flags.distortion_detection ? executor.detect_distortions(ctx, p, extra.trace)
                                                      : DistortionMap{};
        if (p.flags.distortion_detection) merge_state(extra, IntermediateState{{}, det, {}, {}, {}, {}});
        auto entries = executor.analyze_distortions(ctx, p, det, extra.trace);
        extra.analyses.insert(extra.analyses.end(), entries.begin(), entries.end());
      } else if (item == "tool_score") {
        Plan p = np;
        p.query_type = QueryType::kIqa;
        p.reference_mode = state.plan.reference_mode;
        p.flags = {false, false, true, true};
        if (!p.distortions) p.distortions = state.plan.distortions;
        auto assignments = executor.select_tools(ctx, state.detections, p, extra.trace);
        // Tools that already failed would fail the same way again.
        std::set<std::string> failed;
        for (const auto& s : state.scores) {
          if (!s.ok) failed.insert(s.tool_name);
        }
        for (auto it = assignments.begin(); it != assignments.end();) {
          it = failed.contains(it->second) ? assignments.erase(it) : std::next(it);
        }
        p.required_tools.reset();
        if (assignments.empty()) {
          const auto fallback = executor.fallback_tool(p.reference_mode, ctx);
          if (fallback && !failed.contains(*fallback)) p.required_tools = std::vector<std::string>{*fallback};
        }
        if (!assignments.empty() || p.required_tools) {
          extra.assignments = assignments;
          extra.scores = executor.execute_tools(ctx, p, assignments, extra.trace);
        }
      }
    }
    merge_state(state, extra);
    if (!extra.scores.empty() && !state.plan.required_tools) {
      // Keep validate_state's closure: scores from the fallback tool count as required.
      for (const auto& s : extra.scores) {
        if (s.ok && std::none_of(state.assignments.begin(), state.assignments.end(),
                                 [&](const auto& kv) { return kv.second == s.tool_name; })) {
          if (!state.plan.required_tools) state.plan.required_tools.emplace();
          state.plan.required_tools->push_back(s.tool_name);
        }
      }
    }
    std::string detail = "round " + std::to_string(rounds) + " for";
    for (const auto& m : check.missing) detail += " " + m;
    check = sufficiency_check(state, kind, logprobs_available);
    detail += check.sufficient ? "; now sufficient" : "; still insufficient";
    state.trace.push_back({"reflection", std::chrono::duration<double, std::milli>(
                                             std::chrono::steady_clock::now() - t0).count(),
                           check.sufficient, detail, ""});
  }
  if (outcome) {
    outcome->rounds = rounds;
    outcome->final_check = check;
  }
  return state;
}

// ---------------------------------------------------------------------------

std::string Summarizer::render_analysis(const IntermediateState& state) {
  if (state.analyses.empty()) return "none";
  json out = json::object();
  for (const auto& a : state.analyses) {
    out[a.scope_key].push_back({{"type", a.distortion.subtype ? *a.distortion.subtype
                                                              : std::string(to_string(a.distortion.name))},
                                {"severity", a.severity.label()},
                                {"explanation", a.rationale}});
  }
  return out.dump();
}

std::string Summarizer::render_tool_scores(const IntermediateState& state) {
  json out = json::object();
  for (const auto& s : state.scores) {
    if (s.ok) out[s.tool_name] = std::round(*s.calibrated_score * 1e4) / 1e4;
  }
  return out.empty() ? "none" : out.dump();
}

std::optional<LevelLogprobs> Summarizer::request_level_logprobs(const QueryContext& ctx,
                                                                const IntermediateState& state) const {
  if (!gateway_) return std::nullopt;
  const auto& tpl = assets_.prompt("summary_score");
  const std::map<std::string, std::string> vars{{"query", ctx.query_text},
                                                {"analysis", render_analysis(state)},
                                                {"tool_scores", render_tool_scores(state)}};
  ChatMessage user{Role::kUser, fill_template(tpl.user, vars), {}};
  if (ctx.distorted_image.valid()) user.images.push_back(ctx.distorted_image);
  try {
    return gateway_->level_logprobs({{Role::kSystem, fill_template(tpl.system, vars), {}}, user});
  } catch (const Error& e) {
    if (gateway_->is_fatal(e)) throw;
    return std::nullopt;
  }
}

namespace {

std::vector<char> offered_letters(const std::string& query) {
  auto letters = text::option_letters(query);
  if (letters.empty()) letters = {'A', 'B', 'C', 'D', 'E'};
  return letters;
}

std::optional<char> letter_in(const std::string& answer, const std::vector<char>& letters) {
  const auto t = text::trim(answer);
  for (size_t i = 0; i < t.size(); ++i) {
    const char c = t[i];
    if (std::find(letters.begin(), letters.end(), c) == letters.end()) continue;
    const bool left = i == 0 || !std::isalnum(static_cast<unsigned char>(t[i - 1]));
    const bool right = i + 1 == t.size() || !std::isalnum(static_cast<unsigned char>(t[i + 1]));
    if (left && right) return c;
  }
  return std::nullopt;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string evidence_summary(const IntermediateState& state) {
  std::string out;
  std::vector<ToolScore> ok;
  for (const auto& s : state.scores) {
    if (s.ok) ok.push_back(s);
  }
  if (!ok.empty()) {
    out += " Tool scores:";
    for (const auto& s : ok) out += " " + s.tool_name + " " + fmt(*s.calibrated_score) + ",";
    out.back() = '.';
  }
  int top = 0;
  for (const auto& a : state.analyses) top = std::max(top, a.severity.ordinal());
  if (!state.analyses.empty()) {
    if (top == 0) {
      out += " No visible distortion was found.";
    } else {
      out += " Most severe:";
      for (const auto& a : state.analyses) {
        if (a.severity.ordinal() != top) continue;
        out += " " + std::string(to_string(a.distortion.name)) + " in " + a.scope_key + " (" +
               std::string(a.severity.label()) + "): " + a.rationale + ";";
      }
      out.back() = '.';
    }
  }
  return out;
}

}  // namespace

FinalAnswer Summarizer::generate_answer(const QueryContext& ctx, const IntermediateState& state,
                                        AnswerKind kind, const std::optional<LevelLogprobs>& logprobs,
                                        const SufficiencyResult& sufficiency) const {
  FinalAnswer ans;
  ans.answer_kind = kind;
  ans.state_digest = state_digest(state);
  std::string preamble;
  if (!sufficiency.sufficient) {
    preamble = "Insufficient evidence (missing:";
    for (const auto& m : sufficiency.missing) preamble += " " + m;
    preamble += "). ";
    ans.diagnostics["insufficient"] = sufficiency.missing;
  }

  std::vector<double> tool_scores;
  for (const auto& s : state.scores) {
    if (s.ok) tool_scores.push_back(*s.calibrated_score);
  }
  // Score from whatever evidence exists; used by Score answers and as the
  // Choice fallback.
  auto predicted = [&](json& diag) {
    std::array<double, 5> p{0.2, 0.2, 0.2, 0.2, 0.2};
    if (logprobs) {
      p = level_softmax(logprobs->by_level);
      diag["logprob_source"] = logprobs->from_fallback ? "fallback" : "backend";
    } else {
      diag["logprob_source"] = "unavailable";
    }
    if (!tool_scores.empty()) {
      FusionInputs in{tool_scores, {}, config_.eta};
      for (int c = 1; c <= 5; ++c) in.level_logprobs[c] = std::log(p[c - 1]);
      const auto r = fuse_scores(in, config_.fusion_mode);
      diag["path"] = "fusion";
      diag["fusion_mode"] = to_string(config_.fusion_mode);
      diag["fusion"] = encode(r.diagnostics);
      return r.q;
    }
    const double q = uniform_average_score(p);
    diag["path"] = logprobs ? "vlm_only" : "no_evidence";
    diag["p"] = p;
    return q;
  };

  if (kind == AnswerKind::kScore) {
    const double q = predicted(ans.diagnostics);
    ans.score = q;
    const auto level = QualityLevel(static_cast<int>(std::clamp(std::round(q), 1.0, 5.0)));
    ans.reasoning = preamble + "Predicted quality " + fmt(q) + " on the 1-5 scale (" +
                    std::string(level.label()) + ")." + evidence_summary(state);
    return ans;
  }

  const bool choice = kind == AnswerKind::kChoice;
  std::optional<json> reply;
  if (gateway_) {
    const auto& tpl = assets_.prompt(choice ? "summary_choice" : "summary_explain");
    const std::map<std::string, std::string> vars{{"query", ctx.query_text},
                                                  {"analysis", render_analysis(state)},
                                                  {"tool_scores", render_tool_scores(state)}};
    ChatMessage user{Role::kUser, fill_template(tpl.user, vars), {}};
    if (ctx.distorted_image.valid()) user.images.push_back(ctx.distorted_image);
    std::vector<ChatMessage> msgs{{Role::kSystem, fill_template(tpl.system, vars), {}}, user};
    const auto letters = offered_letters(ctx.query_text);
    for (int attempt = 0; attempt < 2 && !reply; ++attempt) {
      ChatResponse resp;
      try {
        resp = gateway_->chat({msgs, {}, std::nullopt});
      } catch (const Error& e) {
        if (gateway_->is_fatal(e)) throw;
        ans.diagnostics["gateway_error"] = e.what();
        break;
      }
      auto obj = extract_json_object(resp.text);
      if (!obj && !choice && !text::trim(resp.text).empty()) {
        obj = json{{"final_answer", std::string(text::trim(resp.text))}};
      }
      if (obj && obj->contains("final_answer")) {
        const auto fa = (*obj)["final_answer"].is_string() ? (*obj)["final_answer"].get<std::string>()
                                                          : (*obj)["final_answer"].dump();
        if (!choice || letter_in(fa, letters)) {
          reply = obj;
          break;
        }
      }
      msgs.back().text += "\nYour previous reply could not be parsed. Return only the JSON object.";
    }
    if (choice && reply) {
      ans.choice = *letter_in((*reply)["final_answer"].is_string() ? (*reply)["final_answer"].get<std::string>()
                                                                    : (*reply)["final_answer"].dump(),
                              letters);
    }
  }

  if (choice) {
    std::string why = reply ? reply->value("quality_reasoning", "") : "";
    if (!ans.choice) {
      json diag;
      const double q = predicted(diag);
      ans.choice = QualityLevel(static_cast<int>(std::clamp(std::round(q), 1.0, 5.0))).letter();
      diag["q"] = q;
      ans.diagnostics["choice_fallback"] = diag;
      why = "No parseable choice; answered with the quality level nearest the predicted score " + fmt(q) + ".";
    }
    if (text::trim(why).empty()) why = "Answer " + std::string(1, *ans.choice) + "." + evidence_summary(state);
    ans.reasoning = preamble + why;
    return ans;
  }

  std::string text;
  if (reply) {
    const auto& fa = (*reply)["final_answer"];
    text = fa.is_string() ? fa.get<std::string>() : fa.dump();
    const auto why = reply->value("quality_reasoning", "");
    if (!text::trim(why).empty()) text += "\n" + why;
  }
  if (text::trim(text).empty()) {
    text = state.plan.query_type == QueryType::kOther
               ? "No model backend is available to interpret this image."
               : "Evidence gathered for the query." + evidence_summary(state);
    if (state.analyses.empty() && tool_scores.empty() && state.plan.query_type != QueryType::kOther) {
      text = "No distortion evidence was gathered.";
    }
  }
  ans.reasoning = preamble + text;
  return ans;
}

}  // namespace iqagent
