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

#include "iqagent/executor.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include "iqagent/error.hpp"
#include "iqagent/json_io.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

namespace iqagent {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// What the model sees for one distortion: the refinement when there is one.
std::string label(const DistortionCategory& d) {
  return d.subtype ? *d.subtype : std::string(to_string(d.name));
}

std::string scope_text(const Plan& plan) {
  if (plan.global_scope()) return std::string(kGlobalScope);
  return json(plan.query_scope).dump();
}

json render_distortions(const DistortionMap& m) {
  json out = json::object();
  for (const auto& [key, list] : m) {
    json arr = json::array();
    for (const auto& d : list) arr.push_back(label(d));
    out[key] = std::move(arr);
  }
  return out;
}

// Resolves a model-written distortion name, preferring the exact labels we sent.
std::optional<DistortionCategory> resolve(const std::string& name, const std::vector<DistortionCategory>& sent) {
  for (const auto& d : sent) {
    if (text::iequals(text::trim(name), label(d))) return d;
  }
  auto parsed = parse_distortion_label(name);
  if (!parsed) return std::nullopt;
  for (const auto& d : sent) {
    if (d.name == parsed->name) return d;
  }
  return parsed;
}

std::optional<std::string> resolve_scope(const std::string& key, const Plan& plan) {
  if (text::iequals(text::trim(key), kGlobalScope)) return std::string(kGlobalScope);
  for (const auto& s : plan.query_scope) {
    if (s == key || text::iequals(text::trim(s), text::trim(key))) return s;
  }
  return std::nullopt;
}

void add_unique(std::vector<DistortionCategory>& list, const DistortionCategory& d) {
  for (auto& x : list) {
    if (x.name == d.name) {
      if (!x.subtype && d.subtype) x.subtype = d.subtype;
      return;
    }
  }
  list.push_back(d);
}

ChatMessage user_message(std::string text, const QueryContext& ctx) {
  ChatMessage m{Role::kUser, std::move(text), {}};
  if (ctx.distorted_image.valid()) m.images.push_back(ctx.distorted_image);
  return m;
}

}  // namespace

DistortionMap analysis_input(const Plan& plan, const DistortionMap& detections) {
  if (!detections.empty()) return detections;
  if (plan.distortions) return *plan.distortions;
  return {};
}

Executor::Executor(Gateway* gateway, const Assets& assets, const ToolRegistry& registry,
                   ExecutorConfig config, AdapterPool* adapters)
    : gateway_(gateway), assets_(assets), registry_(registry), config_(std::move(config)),
      adapters_(adapters) {}

DistortionMap Executor::detect_distortions(const QueryContext& ctx, const Plan& plan,
                                           std::vector<TraceEntry>& trace) {
  if (!plan.flags.distortion_detection) return plan.distortions.value_or(DistortionMap{});
  const auto t0 = Clock::now();
  if (!gateway_) {
    trace.push_back({"detection", ms_since(t0), false, "no model backend; detection skipped", ""});
    return {};
  }
  const auto& tpl = assets_.prompt("detection");
  std::vector<ChatMessage> msgs{
      {Role::kSystem, tpl.system, {}},
      user_message(fill_template(tpl.user, {{"query", ctx.query_text}, {"scope", scope_text(plan)}}), ctx)};

  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatResponse resp;
    try {
      resp = gateway_->chat({msgs, {}, std::nullopt});
    } catch (const Error& e) {
      if (gateway_->is_fatal(e)) throw;
      trace.push_back({"detection", ms_since(t0), false, std::string("gateway error: ") + e.what(), ""});
      return {};
    }
    auto obj = extract_json_object(resp.text);
    const json set = obj ? obj->value("distortion_set", json()) : json();
    if (!set.is_object()) {
      msgs.back().text += "\nYour previous reply had no \"distortion_set\" object. Return only the JSON object.";
      trace.push_back({"detection", ms_since(t0), false, "unparseable detection reply", sha256_hex(resp.text)});
      continue;
    }
    DistortionMap out;
    std::vector<std::string> dropped;
    for (const auto& [key, list] : set.items()) {
      const auto scope = resolve_scope(key, plan);
      if (!scope) {
        dropped.push_back("scope '" + key + "'");
        continue;
      }
      const json arr = list.is_array() ? list : json::array({list});
      for (const auto& item : arr) {
        const auto name = item.is_string() ? item.get<std::string>() : item.dump();
        auto d = resolve(name, {});
        if (!d) {
          dropped.push_back("'" + name + "'");
          continue;
        }
        add_unique(out[*scope], *d);
      }
    }
    std::string detail = "detected " + render_distortions(out).dump();
    if (!dropped.empty()) {
      detail += "; dropped";
      for (const auto& d : dropped) detail += " " + d;
    }
    trace.push_back({"detection", ms_since(t0), dropped.empty(), detail, sha256_hex(resp.text)});
    return out;
  }
  trace.push_back({"detection", ms_since(t0), false, "detection unavailable after retry", ""});
  return {};
}

std::vector<AnalysisEntry> Executor::analyze_distortions(const QueryContext& ctx, const Plan& plan,
                                                         const DistortionMap& detections,
                                                         std::vector<TraceEntry>& trace) {
  std::vector<AnalysisEntry> out;
  if (!plan.flags.distortion_analysis) return out;
  const auto input = analysis_input(plan, detections);
  if (input.empty()) {
    trace.push_back({"analysis", 0.0, false, "no distortions to analyze", ""});
    return out;
  }
  auto synthesize = [&](const std::string& scope, const std::vector<DistortionCategory>& list) {
    for (const auto& d : list) {
      out.push_back({scope, d, SeverityLevel(2), "unverified (analysis unavailable)"});
    }
  };

  for (const auto& [scope, list] : input) {
    const auto t0 = Clock::now();
    if (!gateway_) {
      synthesize(scope, list);
      trace.push_back({"analysis", ms_since(t0), false, scope + ": no model backend; severities unverified", ""});
      continue;
    }
    const auto& tpl = assets_.prompt("analysis");
    DistortionMap one{{scope, list}};
    const auto set_text = render_distortions(one).dump();
    std::vector<ChatMessage> msgs{
        {Role::kSystem, fill_template(tpl.system, {{"distortion_set", set_text}}), {}},
        user_message(fill_template(tpl.user, {{"query", ctx.query_text}, {"distortion_set", set_text}}), ctx)};

    bool done = false;
    for (int attempt = 0; attempt < 2 && !done; ++attempt) {
      ChatResponse resp;
      try {
        resp = gateway_->chat({msgs, {}, std::nullopt});
      } catch (const Error& e) {
        if (gateway_->is_fatal(e)) throw;
        trace.push_back({"analysis", ms_since(t0), false, scope + ": gateway error: " + e.what(), ""});
        break;
      }
      auto obj = extract_json_object(resp.text);
      const json an = obj ? obj->value("distortion_analysis", json()) : json();
      if (!an.is_object()) {
        msgs.back().text += "\nYour previous reply had no \"distortion_analysis\" object. Return only the JSON object.";
        trace.push_back({"analysis", ms_since(t0), false, scope + ": unparseable analysis reply",
                         sha256_hex(resp.text)});
        continue;
      }
      std::vector<std::string> dropped;
      size_t added = 0;
      // One call per scope: every entry in the reply belongs to this scope.
      for (const auto& [key, entries] : an.items()) {
        const json arr = entries.is_array() ? entries : json::array({entries});
        for (const auto& e : arr) {
          if (!e.is_object()) continue;
          const auto type = e.value("type", "");
          auto d = resolve(type, list);
          if (!d) {
            dropped.push_back("'" + type + "'");
            continue;
          }
          SeverityLevel sev;
          try {
            sev = e.contains("severity") && e["severity"].is_number_integer()
                      ? decode<SeverityLevel>(e["severity"], ParseMode::kLenient)
                      : normalize_severity(e.value("severity", ""));
          } catch (const Error&) {
            dropped.push_back("severity '" + e.value("severity", json()).dump() + "'");
            continue;
          }
          std::string why = e.value("explanation", e.value("rationale", ""));
          if (sev.ordinal() > 0 && text::trim(why).empty()) why = "(no explanation given)";
          out.push_back({scope, *d, sev, why});
          ++added;
        }
      }
      std::string detail = scope + ": " + std::to_string(added) + " entries";
      for (const auto& d : dropped) detail += "; dropped " + d;
      trace.push_back({"analysis", ms_since(t0), dropped.empty(), detail, sha256_hex(resp.text)});
      done = true;
    }
    if (!done) {
      synthesize(scope, list);
      trace.push_back({"analysis", ms_since(t0), false, scope + ": analysis unavailable; severities unverified", ""});
    }
  }
  return out;
}

Assignments Executor::rank_all(const DistortionMap& detections, const Plan& plan,
                               const QueryContext& ctx) const {
  if (registry_.empty()) throw Error(Errc::kRegistryEmpty, "tool registry is empty");
  Assignments out;
  const auto mode = to_tool_mode(plan.reference_mode);
  // Rank among runnable tools; when none is runnable the failure shows up at execution.
  std::vector<std::string> allowed_list;
  for (const auto& t : registry_.tools()) {
    if (!runnable(t)) continue;
    if (ctx.user_tool_constraints &&
        std::none_of(ctx.user_tool_constraints->begin(), ctx.user_tool_constraints->end(),
                     [&](const std::string& n) { return registry_.find(n) == &t; })) {
      continue;
    }
    allowed_list.push_back(t.name);
  }
  const std::vector<std::string>* allowed = ctx.user_tool_constraints ? &*ctx.user_tool_constraints : nullptr;
  if (!allowed_list.empty()) allowed = &allowed_list;
  for (const auto& [scope, list] : analysis_input(plan, detections)) {
    for (const auto& d : list) {
      out[{scope, d.name}] = rank_tool(d, mode, registry_, config_.ranker, allowed);
    }
  }
  return out;
}

bool Executor::runnable(const ToolDescriptor& t) const {
  switch (t.binding.kind) {
    case ToolBinding::Kind::kNative: return true;
    case ToolBinding::Kind::kAdapter:
      return adapters_ && !(t.binding.endpoint.empty() && config_.default_adapter_endpoint.empty());
    case ToolBinding::Kind::kUnavailable: return false;
  }
  return false;
}

std::optional<std::string> Executor::fallback_tool(ReferenceMode ref_mode, const QueryContext& ctx) const {
  const auto mode = to_tool_mode(ref_mode);
  auto usable = [&](const ToolDescriptor* t) {
    if (!t || t->mode != mode || !runnable(*t)) return false;
    if (!ctx.user_tool_constraints) return true;
    return std::any_of(ctx.user_tool_constraints->begin(), ctx.user_tool_constraints->end(),
                       [&](const std::string& n) { return registry_.find(n) == t; });
  };
  const auto& def = mode == ToolMode::kFR ? config_.ranker.fr_default : config_.ranker.nr_default;
  if (const auto* d = registry_.find(def); usable(d)) return d->name;
  for (const auto& t : registry_.tools()) {
    if (usable(&t)) return t.name;
  }
  return std::nullopt;
}

Assignments Executor::select_tools(const QueryContext& ctx, const DistortionMap& detections,
                                   const Plan& plan, std::vector<TraceEntry>& trace) {
  if (!plan.flags.tool_selection) return {};
  if (registry_.empty()) throw Error(Errc::kRegistryEmpty, "tool registry is empty");
  const auto t0 = Clock::now();
  auto ranked = rank_all(detections, plan, ctx);
  if (ranked.empty()) {
    trace.push_back({"selection", ms_since(t0), false, "no distortions to assign", ""});
    return ranked;
  }
  if (!gateway_) {
    trace.push_back({"selection", ms_since(t0), true, "ranker assigned " + std::to_string(ranked.size()), ""});
    return ranked;
  }

  const auto mode = to_tool_mode(plan.reference_mode);
  auto permitted = [&](const ToolDescriptor& t) {
    if (t.mode != mode || !runnable(t)) return false;
    if (!ctx.user_tool_constraints) return true;
    return std::any_of(ctx.user_tool_constraints->begin(), ctx.user_tool_constraints->end(),
                       [&](const std::string& n) { return registry_.find(n) == &t; });
  };
  std::string tools_text;
  for (const auto& t : registry_.tools()) {
    if (!permitted(t)) continue;
    std::string line = "\n- " + t.name + ": " + t.description;
    if (t.best_at.empty()) {
      line += " This tool has no known strengths for any specific distortion.";
    } else {
      line += " Best at evaluating:";
      for (const auto& b : t.best_at) line += " " + b.category + (b.subtype ? " (" + *b.subtype + ")" : "") + ";";
      line.pop_back();
      line += ".";
    }
    tools_text += line;
  }
  const auto input = analysis_input(plan, detections);
  const auto& tpl = assets_.prompt("selection");
  const auto set_text = render_distortions(input).dump();
  const std::map<std::string, std::string> vars{
      {"query", ctx.query_text}, {"distortion_set", set_text}, {"tool_description", tools_text}};
  std::vector<ChatMessage> msgs{{Role::kSystem, fill_template(tpl.system, vars), {}},
                                user_message(fill_template(tpl.user, vars), ctx)};

  ChatResponse resp;
  try {
    resp = gateway_->chat({msgs, {}, std::nullopt});
  } catch (const Error& e) {
    if (gateway_->is_fatal(e)) throw;
    trace.push_back({"selection", ms_since(t0), false,
                     std::string("gateway error: ") + e.what() + "; ranker assigned all", ""});
    return ranked;
  }
  auto obj = extract_json_object(resp.text);
  const json sel = obj ? obj->value("selected_tools", json()) : json();
  Assignments out;
  std::vector<std::string> rejected;
  if (sel.is_object()) {
    for (const auto& [key, inner] : sel.items()) {
      const auto scope = resolve_scope(key, plan);
      auto it = scope ? input.find(*scope) : input.end();
      if (it == input.end() || !inner.is_object()) continue;
      for (const auto& [dist, tool] : inner.items()) {
        auto d = resolve(dist, it->second);
        if (!d || !ranked.contains({*scope, d->name})) continue;
        const auto name = tool.is_string() ? tool.get<std::string>() : tool.dump();
        const auto* desc = registry_.find(name);
        if (!desc || !permitted(*desc)) {
          rejected.push_back(name);
          continue;
        }
        out.emplace(AssignmentKey{*scope, d->name}, desc->name);
      }
    }
  }
  size_t filled = 0;
  for (const auto& [key, tool] : ranked) {
    if (out.emplace(key, tool).second) ++filled;
  }
  std::string detail = "model assigned " + std::to_string(out.size() - filled) + ", ranker filled " +
                       std::to_string(filled);
  for (const auto& r : rejected) detail += "; rejected " + r;
  trace.push_back({"selection", ms_since(t0), sel.is_object() && rejected.empty(), detail, sha256_hex(resp.text)});
  return out;
}

ToolScore Executor::execute_one(const QueryContext& ctx, const std::string& tool,
                                std::vector<std::string>& notes) {
  ToolScore s;
  s.tool_name = tool;
  auto fail = [&](Errc code, const std::string& why) {
    s.ok = false;
    s.failure_reason = std::string(to_string(code)) + ": " + why;
    return s;
  };
  const auto* d = registry_.find(tool);
  if (!d) return fail(Errc::kUnknownTool, "not in registry");
  s.tool_name = d->name;
  if (d->binding.kind == ToolBinding::Kind::kUnavailable) return fail(Errc::kUnknownTool, "tool is unavailable");
  const bool fr = d->mode == ToolMode::kFR;
  if (fr && !ctx.reference_image) return fail(Errc::kMissingReference, "full-reference tool without a reference image");

  // Align the reference with the distorted raster for FR tools.
  std::optional<Image> reference;
  if (fr) {
    const auto& dist = ctx.distorted_image.raster();
    const auto& ref = ctx.reference_image->raster();
    if (ref.width != dist.width || ref.height != dist.height) {
      reference = resize_bilinear(ref, dist.width, dist.height);
      notes.push_back("reference resampled from " + std::to_string(ref.width) + "x" + std::to_string(ref.height) +
                      " to " + std::to_string(dist.width) + "x" + std::to_string(dist.height));
    }
  }

  try {
    if (d->binding.kind == ToolBinding::Kind::kNative) {
      const Image& ref = reference ? *reference : ctx.reference_image->raster();
      s.raw_score = run_native(d->binding.kernel, ctx.distorted_image.raster(), ref, config_.kernels);
    } else {
      const auto endpoint = d->binding.endpoint.empty() ? config_.default_adapter_endpoint : d->binding.endpoint;
      if (endpoint.empty() || !adapters_) return fail(Errc::kConfig, "no adapter endpoint configured");
      AdapterScoreRequest req;
      req.tool = d->name;
      req.distorted = {ctx.distorted_image.encoded(), ctx.distorted_image.format()};
      if (fr) {
        req.reference = reference ? AdapterImage{encode_png(*reference), "png"}
                                  : AdapterImage{ctx.reference_image->encoded(), ctx.reference_image->format()};
      }
      req.request_id = d->name + "-" + ctx.distorted_image.digest().substr(0, 12);
      const auto resp = adapters_->score(endpoint, req);
      if (!resp.ok()) return fail(Errc::kAdapterProtocolError, "adapter reported: " + resp.message);
      s.raw_score = resp.raw_score;
    }
    const auto mapped = logistic_map_detailed(*s.raw_score, default_params(d->name, registry_, config_.logistic_form));
    if (mapped.clamped) notes.push_back("calibrated value " + json(mapped.pre_clamp).dump() + " clamped");
    s.calibrated_score = mapped.value;
    s.ok = true;
  } catch (const Error& e) {
    s.calibrated_score.reset();
    return fail(e.code(), e.what());
  }
  return s;
}

std::vector<ToolScore> Executor::execute_tools(const QueryContext& ctx, const Plan& plan,
                                               const Assignments& assignments,
                                               std::vector<TraceEntry>& trace) {
  if (!plan.flags.tool_execute) return {};
  if (registry_.empty()) throw Error(Errc::kRegistryEmpty, "tool registry is empty");

  std::map<std::string, std::optional<DistortionCategory>> jobs;
  if (plan.required_tools) {
    for (const auto& t : *plan.required_tools) {
      const auto* d = registry_.find(t);
      jobs.emplace(d ? d->name : t, std::nullopt);
    }
  }
  for (const auto& [key, tool] : assignments) {
    auto [it, inserted] = jobs.emplace(tool, DistortionCategory{key.distortion, std::nullopt});
    if (!inserted && it->second) continue;
    it->second = DistortionCategory{key.distortion, std::nullopt};
  }
  if (jobs.empty()) {
    trace.push_back({"execution", 0.0, false, "no tools to run", ""});
    return {};
  }

  struct Job {
    std::string tool;
    std::optional<DistortionCategory> context;
    ToolScore score;
    std::vector<std::string> notes;
    double wall_ms = 0.0;
  };
  std::vector<Job> work;
  for (const auto& [tool, context] : jobs) work.push_back({tool, context, {}, {}, 0.0});

  std::atomic<size_t> next{0};
  std::atomic<bool> aborted{false};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < work.size(); i = next.fetch_add(1)) {
      auto& job = work[i];
      if (aborted.load()) {
        job.score.tool_name = job.tool;
        job.score.failure_reason = "Aborted: an earlier tool failed";
        continue;
      }
      const auto t0 = Clock::now();
      job.score = execute_one(ctx, job.tool, job.notes);
      job.wall_ms = ms_since(t0);
      if (!job.score.ok && config_.policy.on_tool_failure == ExecutionPolicy::OnFailure::kAbort) {
        aborted.store(true);
      }
    }
  };
  const auto n_threads = std::clamp<size_t>(static_cast<size_t>(std::max(1, config_.policy.max_parallel_tools)), 1,
                                            work.size());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }

  std::vector<ToolScore> out;
  for (auto& job : work) {
    job.score.distortion_context = job.context;
    std::string detail = "tool " + job.score.tool_name + ": ";
    if (job.score.ok) {
      detail += "raw " + json(*job.score.raw_score).dump() + " -> " + json(*job.score.calibrated_score).dump();
    } else {
      detail += job.score.failure_reason;
    }
    for (const auto& n : job.notes) detail += "; " + n;
    trace.push_back({"execution", job.wall_ms, job.score.ok, detail, ""});
    out.push_back(std::move(job.score));
  }
  std::sort(out.begin(), out.end(), [](const ToolScore& a, const ToolScore& b) { return a.tool_name < b.tool_name; });
  return out;
}

IntermediateState Executor::run(const QueryContext& ctx, const Plan& plan) {
  const auto violations = validate_plan(plan);
  if (!violations.empty()) {
    throw Error(Errc::kSchemaViolation, "plan fails validation: " + violations.front().detail);
  }
  IntermediateState state;
  state.plan = plan;
  if (plan.flags.distortion_detection) state.detections = detect_distortions(ctx, plan, state.trace);
  state.analyses = analyze_distortions(ctx, plan, state.detections, state.trace);
  state.assignments = select_tools(ctx, state.detections, plan, state.trace);
  state.scores = execute_tools(ctx, plan, state.assignments, state.trace);
  return state;
}

}  // namespace iqagent
