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

#include "iqagent/planner.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "iqagent/error.hpp"
#include "iqagent/json_io.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

namespace iqagent {

namespace {

bool has_distortions(const Plan& p) {
  if (!p.distortions) return false;
  return std::any_of(p.distortions->begin(), p.distortions->end(),
                     [](const auto& kv) { return !kv.second.empty(); });
}

// Moves distortion keys that do not name a scope object onto the closest
// valid key: a case-insensitive scope match, else Global.
DistortionMap rekey(const DistortionMap& in, const std::vector<std::string>& scope) {
  DistortionMap out;
  for (const auto& [key, list] : in) {
    std::string target(kGlobalScope);
    for (const auto& s : scope) {
      if (s == key) {
        target = s;
        break;
      }
      if (text::iequals(text::trim(s), text::trim(key))) target = s;
    }
    auto& dst = out[target];
    for (const auto& d : list) {
      if (std::find(dst.begin(), dst.end(), d) == dst.end()) dst.push_back(d);
    }
  }
  for (auto it = out.begin(); it != out.end();) {
    it = it->second.empty() ? out.erase(it) : std::next(it);
  }
  return out;
}

}  // namespace

PlannerRuleInputs derive_rule_inputs(const Plan& draft, const QueryContext& ctx) {
  PlannerRuleInputs in;
  in.is_iqa = draft.query_type == QueryType::kIqa;
  in.mentions_distortions = has_distortions(draft);
  in.mentions_region = !draft.query_scope.empty();
  in.mentions_tool = draft.required_tools && !draft.required_tools->empty();
  in.has_reference = ctx.reference_image.has_value();
  return in;
}

Plan apply_rule_table(Plan draft, const PlannerRuleInputs& in) {
  Plan p = std::move(draft);
  p.query_type = in.is_iqa ? QueryType::kIqa : QueryType::kOther;
  p.reference_mode = in.has_reference ? ReferenceMode::kFullReference : ReferenceMode::kNoReference;

  std::vector<std::string> scope;
  for (const auto& s : p.query_scope) {
    const auto t = std::string(text::trim(s));
    if (!t.empty() && std::find(scope.begin(), scope.end(), t) == scope.end()) scope.push_back(t);
  }
  p.query_scope = std::move(scope);

  if (p.distortions) {
    DistortionMap cleaned;
    for (auto [key, list] : *p.distortions) {
      for (auto& d : list) {
        if (d.subtype && text::trim(*d.subtype).empty()) d.subtype.reset();
      }
      cleaned[key] = std::move(list);
    }
    p.distortions = rekey(cleaned, p.query_scope);
  }
  if (in.mentions_distortions && has_distortions(p)) {
    p.distortion_source = DistortionSource::kExplicit;
  } else {
    p.distortion_source = DistortionSource::kInferred;
    p.distortions.reset();
  }
  if (!in.mentions_tool) p.required_tools.reset();

  PlanFlags f;
  if (in.is_iqa) {
    f.distortion_detection = !in.mentions_distortions;
    f.distortion_analysis = true;
    if (in.mentions_tool && in.mentions_region) {
      f.tool_selection = false;
      f.tool_execute = true;
    } else if (in.mentions_region) {
      f.tool_selection = false;
      f.tool_execute = false;
    } else if (in.mentions_tool) {
      f.tool_selection = false;
      f.tool_execute = true;
    } else {
      f.tool_selection = true;
      f.tool_execute = true;
    }
  }
  p.flags = f;
  return p;
}

std::vector<ChatMessage> build_planner_prompt(const QueryContext& ctx, const Assets& assets,
                                              const std::vector<std::string>& missing) {
  if (text::trim(ctx.query_text).empty()) throw Error(Errc::kQueryEmpty, "query text is empty");
  const auto& tpl = assets.prompt("planner");
  std::string user = fill_template(tpl.user, {{"query", ctx.query_text}});
  if (!missing.empty()) {
    user += "\nThe previous plan left these items unresolved:";
    for (const auto& m : missing) user += " " + m + ";";
    user.pop_back();
  }
  std::vector<ChatMessage> msgs;
  msgs.push_back({Role::kSystem, tpl.system, {}});
  ChatMessage u{Role::kUser, std::move(user), {}};
  if (ctx.distorted_image.valid()) u.images.push_back(ctx.distorted_image);
  msgs.push_back(std::move(u));
  return msgs;
}

Plan parse_plan(std::string_view model_output) {
  if (text::trim(model_output).empty()) throw Error(Errc::kUnparseable, "empty planner reply");
  auto obj = extract_json_object(model_output);
  if (!obj) throw Error(Errc::kUnparseable, "planner reply contains no JSON object");
  return decode<Plan>(*obj, ParseMode::kLenient);
}

// ---------------------------------------------------------------------------

Lexicon Lexicon::from_json(const json& j) {
  Lexicon lex;
  for (const auto& t : j.value("distortion_terms", json::array())) {
    const auto cat = parse_category(t.value("category", ""));
    if (!cat) throw Error(Errc::kLoadError, "lexicon term with unknown category: " + t.dump());
    DistortionTerm term{text::lower(t.value("term", "")), *cat, std::nullopt};
    if (t.contains("subtype") && t["subtype"].is_string()) term.subtype = t["subtype"].get<std::string>();
    if (!term.term.empty()) lex.distortion_terms_.push_back(std::move(term));
  }
  std::stable_sort(lex.distortion_terms_.begin(), lex.distortion_terms_.end(),
                   [](const DistortionTerm& a, const DistortionTerm& b) {
                     return text::words(a.term).size() > text::words(b.term).size();
                   });
  for (const auto& t : j.value("aesthetic_terms", json::array())) lex.aesthetic_terms_.push_back(text::lower(t.get<std::string>()));
  for (const auto& t : j.value("region_terms", json::array())) lex.region_terms_.push_back(text::lower(t.get<std::string>()));
  std::stable_sort(lex.region_terms_.begin(), lex.region_terms_.end(),
                   [](const std::string& a, const std::string& b) {
                     return text::words(a).size() > text::words(b).size();
                   });
  return lex;
}

namespace {

// Positions where `needle` occurs as a whole-word run in `hay`.
std::vector<size_t> find_phrase(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  std::vector<size_t> hits;
  if (needle.empty() || needle.size() > hay.size()) return hits;
  for (size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<long>(i))) hits.push_back(i);
  }
  return hits;
}

}  // namespace

Lexicon::Scan Lexicon::scan(std::string_view query, const ToolRegistry& registry) const {
  Scan out;
  const auto words = text::words(query);
  std::vector<bool> used(words.size(), false);

  auto claim = [&](const std::vector<std::string>& phrase) -> bool {
    bool any = false;
    for (size_t at : find_phrase(words, phrase)) {
      bool free = true;
      for (size_t k = 0; k < phrase.size(); ++k) free &= !used[at + k];
      if (!free) continue;
      for (size_t k = 0; k < phrase.size(); ++k) used[at + k] = true;
      any = true;
    }
    return any;
  };

  // Tool names first so "MS-SSIM" is not read as anything else.
  for (const auto& t : registry.tools()) {
    std::vector<std::string> names{t.name};
    names.insert(names.end(), t.aliases.begin(), t.aliases.end());
    for (const auto& n : names) {
      if (claim(text::words(n))) {
        if (std::find(out.tools.begin(), out.tools.end(), t.name) == out.tools.end()) out.tools.push_back(t.name);
      }
    }
  }

  std::map<Category, DistortionCategory> by_category;
  std::vector<Category> order;
  for (const auto& term : distortion_terms_) {
    if (!claim(text::words(term.term))) continue;
    auto [it, inserted] = by_category.try_emplace(term.category, DistortionCategory{term.category, term.subtype});
    if (inserted) order.push_back(term.category);
    else if (!it->second.subtype && term.subtype) it->second.subtype = term.subtype;
  }
  for (auto c : order) out.distortions.push_back(by_category.at(c));

  for (const auto& r : region_terms_) {
    if (claim(text::words(r))) out.regions.push_back(r);
  }
  for (const auto& a : aesthetic_terms_) {
    if (!find_phrase(words, text::words(a)).empty()) out.aesthetic = true;
  }
  return out;
}

Plan fallback_plan(const QueryContext& ctx, const Lexicon& lexicon, const ToolRegistry& registry) {
  const auto scan = lexicon.scan(ctx.query_text, registry);
  Plan draft;
  draft.query_type = scan.aesthetic ? QueryType::kOther : QueryType::kIqa;
  draft.query_scope = scan.regions;
  if (!scan.distortions.empty()) {
    DistortionMap m;
    if (scan.regions.empty()) {
      m[std::string(kGlobalScope)] = scan.distortions;
    } else {
      for (const auto& r : scan.regions) m[r] = scan.distortions;
    }
    draft.distortions = std::move(m);
    draft.distortion_source = DistortionSource::kExplicit;
  }
  if (!scan.tools.empty()) draft.required_tools = scan.tools;
  return apply_rule_table(draft, derive_rule_inputs(draft, ctx));
}

Planner::Outcome Planner::plan(const QueryContext& ctx, const std::vector<std::string>& missing) const {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  auto use_fallback = [&](const std::string& why) {
    out.plan = fallback_plan(ctx, lexicon_, registry_);
    out.used_fallback = true;
    out.trace.push_back({"planner", elapsed(), gateway_ == nullptr, "rule-based plan: " + why,
                         sha256_hex(encode(out.plan).dump())});
    return out;
  };
  if (!gateway_) return use_fallback("no model backend");

  auto messages = build_planner_prompt(ctx, assets_, missing);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatRequest req;
    req.messages = messages;
    ChatResponse resp;
    try {
      resp = gateway_->chat(req);
    } catch (const Error& e) {
      if (gateway_->is_fatal(e)) throw;
      return use_fallback(std::string("gateway error: ") + e.what());
    }
    try {
      Plan draft = parse_plan(resp.text);
      // Only registry tools count as an explicit tool mention.
      if (draft.required_tools) {
        std::vector<std::string> known;
        for (const auto& name : *draft.required_tools) {
          if (const auto* d = registry_.find(name)) {
            if (std::find(known.begin(), known.end(), d->name) == known.end()) known.push_back(d->name);
          }
        }
        draft.required_tools = known.empty() ? std::nullopt : std::optional(known);
      }
      out.plan = apply_rule_table(draft, derive_rule_inputs(draft, ctx));
      out.trace.push_back({"planner", elapsed(), true,
                           attempt == 0 ? "model plan" : "model plan after repair prompt",
                           sha256_hex(resp.text)});
      return out;
    } catch (const Error& e) {
      if (e.code() != Errc::kUnparseable && e.code() != Errc::kSchemaViolation &&
          e.code() != Errc::kUnknownCategory && e.code() != Errc::kUnknownField &&
          e.code() != Errc::kUnknownSeverity) {
        throw;
      }
      last_error = e.what();
      out.trace.push_back({"planner", elapsed(), false, std::string("unusable plan: ") + e.what(),
                           sha256_hex(resp.text)});
      messages.back().text += "\nYour previous reply could not be used (" + last_error +
                              "). Return only the JSON object.";
    }
  }
  return use_fallback("model plan unusable after retry");
}

}  // namespace iqagent
