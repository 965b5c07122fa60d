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

#include "iqagent/engine.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "iqagent/error.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

extern char** environ;

namespace iqagent {

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kNone: return "none";
    case BackendKind::kRemote: return "remote";
    case BackendKind::kReplay: return "replay";
    case BackendKind::kRecord: return "record";
  }
  return "none";
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"backend", "none | remote | replay | record"},
      {"endpoint", "chat-completions base URL, e.g. https://api.example.com/v1"},
      {"api_key", "bearer token for the remote endpoint"},
      {"model", "model name sent to the remote endpoint"},
      {"timeout_ms", "remote request timeout"},
      {"max_retries", "remote retries on transport errors, 429 and 5xx"},
      {"top_logprobs", "top_logprobs requested from the remote endpoint"},
      {"cassette", "record/replay cassette path"},
      {"replay_strict", "abort on a replay miss instead of degrading"},
      {"asset_dir", "directory with prompts/, lexicon.json and registry.json"},
      {"registry", "tool registry path"},
      {"registry_patch", "comma-separated calibration patch files applied in order"},
      {"fusion_mode", "normalized | literal"},
      {"eta", "HVS weight sharpness"},
      {"max_rounds", "reflection rounds"},
      {"logistic_form", "standard | as_printed"},
      {"max_parallel_tools", "concurrent tool executions"},
      {"tool_timeout_ms", "per-tool adapter timeout"},
      {"on_tool_failure", "skip | abort"},
      {"adapter_endpoint", "default adapter endpoint (http://host:port or stdio:<command>)"},
      {"psnr_cap_db", "PSNR value for identical images"},
      {"gmsd_c", "GMSD stability constant"},
      {"fr_default", "ranker fallback for full-reference queries"},
      {"nr_default", "ranker fallback for no-reference queries"},
      {"logprob_fallback", "use a smoothed one-hot when the backend has no log-probabilities"},
      {"logprob_epsilon", "smoothing mass per non-chosen level"},
      {"query", "default query when none is given"},
  };
  return keys;
}

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw Error(Errc::kConfig, "invalid value '" + std::string(value) + "' for " + std::string(key) +
                                 " (expected " + std::string(want) + ")");
}

double to_double(std::string_view key, std::string_view v) {
  const auto t = std::string(text::trim(v));
  try {
    size_t used = 0;
    const double d = std::stod(t, &used);
    if (used == t.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

int to_int(std::string_view key, std::string_view v, int min) {
  const auto t = text::trim(v);
  int out = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || out < min) {
    bad_value(key, v, "an integer >= " + std::to_string(min));
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  const auto t = text::lower(text::trim(v));
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  bad_value(key, v, "a boolean");
}

}  // namespace

void apply_setting(EngineConfig& c, std::string_view key_in, std::string_view value) {
  const auto key = text::lower(text::trim(key_in));
  const std::string v(text::trim(value));
  if (key == "backend") {
    const auto k = text::lower(v);
    if (k == "none") c.backend = BackendKind::kNone;
    else if (k == "remote") c.backend = BackendKind::kRemote;
    else if (k == "replay") c.backend = BackendKind::kReplay;
    else if (k == "record") c.backend = BackendKind::kRecord;
    else bad_value(key, v, "none, remote, replay or record");
  } else if (key == "endpoint") {
    c.remote.endpoint = v;
  } else if (key == "api_key") {
    c.remote.api_key = v;
  } else if (key == "model") {
    c.remote.model = v;
  } else if (key == "timeout_ms") {
    c.remote.timeout_ms = to_int(key, v, 1);
  } else if (key == "max_retries") {
    c.remote.max_retries = to_int(key, v, 0);
  } else if (key == "top_logprobs") {
    c.remote.top_logprobs = to_int(key, v, 1);
  } else if (key == "cassette") {
    c.cassette = v;
  } else if (key == "replay_strict") {
    c.replay_strict = to_bool(key, v);
  } else if (key == "asset_dir") {
    c.asset_dir = v;
  } else if (key == "registry") {
    c.registry = v;
  } else if (key == "registry_patch") {
    c.registry_patches.clear();
    size_t start = 0;
    while (start <= v.size()) {
      const auto end = std::min(v.find(',', start), v.size());
      const auto item = text::trim(std::string_view(v).substr(start, end - start));
      if (!item.empty()) c.registry_patches.emplace_back(item);
      start = end + 1;
    }
  } else if (key == "fusion_mode") {
    c.summarizer.fusion_mode = parse_fusion_mode(v);
  } else if (key == "eta") {
    c.summarizer.eta = to_double(key, v);
    if (!(c.summarizer.eta > 0.0)) bad_value(key, v, "a positive number");
  } else if (key == "max_rounds") {
    c.summarizer.max_rounds = to_int(key, v, 0);
  } else if (key == "logistic_form") {
    c.executor.logistic_form = parse_logistic_form(v);
  } else if (key == "max_parallel_tools") {
    c.executor.policy.max_parallel_tools = to_int(key, v, 1);
  } else if (key == "tool_timeout_ms") {
    c.executor.policy.per_tool_timeout_ms = to_int(key, v, 1);
  } else if (key == "on_tool_failure") {
    const auto k = text::lower(v);
    if (k == "skip") c.executor.policy.on_tool_failure = ExecutionPolicy::OnFailure::kSkip;
    else if (k == "abort") c.executor.policy.on_tool_failure = ExecutionPolicy::OnFailure::kAbort;
    else bad_value(key, v, "skip or abort");
  } else if (key == "adapter_endpoint") {
    c.executor.default_adapter_endpoint = v;
  } else if (key == "psnr_cap_db") {
    c.executor.kernels.psnr_cap_db = to_double(key, v);
  } else if (key == "gmsd_c") {
    c.executor.kernels.gmsd_c = to_double(key, v);
  } else if (key == "fr_default") {
    c.executor.ranker.fr_default = v;
  } else if (key == "nr_default") {
    c.executor.ranker.nr_default = v;
  } else if (key == "logprob_fallback") {
    c.logprobs.allow_fallback = to_bool(key, v);
  } else if (key == "logprob_epsilon") {
    c.logprobs.epsilon = to_double(key, v);
    if (!(c.logprobs.epsilon > 0.0 && c.logprobs.epsilon < 0.2)) bad_value(key, v, "a value in (0, 0.2)");
  } else if (key == "query") {
    if (v.empty()) bad_value(key, v, "a non-empty query");
    c.default_query = v;
  } else {
    throw Error(Errc::kConfig, "unknown configuration key '" + std::string(key_in) + "'");
  }
}

EngineConfig load_config(const std::optional<std::string>& config_file,
                         const std::map<std::string, std::string>& environment,
                         const std::map<std::string, std::string>& flags) {
  EngineConfig c;
  if (config_file) {
    json j;
    try {
      j = json::parse(read_file(*config_file));
    } catch (const json::exception& e) {
      throw Error(Errc::kConfig, "config file " + *config_file + ": " + e.what());
    } catch (const Error& e) {
      throw Error(Errc::kConfig, e.what());
    }
    if (!j.is_object()) throw Error(Errc::kConfig, "config file must hold a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (v.is_string()) {
        apply_setting(c, k, v.get<std::string>());
      } else if (v.is_array() && k == "registry_patch") {
        std::string joined;
        for (const auto& item : v) joined += (joined.empty() ? "" : ",") + item.get<std::string>();
        apply_setting(c, k, joined);
      } else if (v.is_primitive() && !v.is_null()) {
        apply_setting(c, k, v.dump());
      } else {
        throw Error(Errc::kConfig, "config key '" + k + "' must be a scalar");
      }
    }
  }
  for (const auto& [k, v] : environment) apply_setting(c, k, v);
  for (const auto& [k, v] : flags) apply_setting(c, k, v);
  return c;
}

std::map<std::string, std::string> environment_settings() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    if (entry.substr(0, kEnvPrefix.size()) != kEnvPrefix) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    const auto key = text::lower(entry.substr(kEnvPrefix.size(), eq - kEnvPrefix.size()));
    const bool known = std::any_of(config_keys().begin(), config_keys().end(),
                                   [&](const auto& kv) { return kv.first == key; });
    if (known) out[key] = std::string(entry.substr(eq + 1));
  }
  return out;
}

AnswerKind classify_query(std::string_view query, const Plan& plan) {
  if (plan.query_type == QueryType::kOther) return AnswerKind::kFreeText;
  if (!text::option_letters(std::string(query)).empty()) return AnswerKind::kChoice;
  if (!plan.global_scope()) return AnswerKind::kFreeText;
  const auto w = text::words(query);
  auto has = [&](std::initializer_list<const char*> terms) {
    for (const char* t : terms) {
      if (text::contains_phrase(w, text::words(t))) return true;
    }
    return false;
  };
  if (has({"why", "explain", "describe", "which", "what kind", "what type", "where"})) {
    return AnswerKind::kFreeText;
  }
  if (has({"score", "rate", "rating", "overall quality", "quality of this image", "quality of the image",
           "how good", "how is the quality", "mos"})) {
    return AnswerKind::kScore;
  }
  return AnswerKind::kFreeText;
}

// ---------------------------------------------------------------------------

namespace {

std::filesystem::path asset_dir_of(const EngineConfig& c) {
  return c.asset_dir.empty() ? default_asset_dir() : std::filesystem::path(c.asset_dir);
}

}  // namespace

Engine::Engine(EngineConfig config, std::shared_ptr<ChatBackend> backend_override)
    : config_(std::move(config)), assets_(asset_dir_of(config_)) {
  registry_ = ToolRegistry::load(config_.registry.empty() ? assets_.registry_path().string()
                                                          : config_.registry);
  for (const auto& patch : config_.registry_patches) {
    try {
      registry_.apply_patch(json::parse(read_file(patch)));
    } catch (const json::exception& e) {
      throw Error(Errc::kConfig, "registry patch " + patch + ": " + e.what());
    }
  }
  lexicon_ = Lexicon::from_json(assets_.lexicon());

  auto live = [&]() -> std::shared_ptr<ChatBackend> {
    if (backend_override) return backend_override;
    if (config_.remote.endpoint.empty()) throw Error(Errc::kConfig, "remote backend needs an endpoint");
    return make_remote_backend(config_.remote);
  };
  std::shared_ptr<ChatBackend> backend;
  switch (config_.backend) {
    case BackendKind::kNone:
      break;
    case BackendKind::kRemote:
      backend = live();
      break;
    case BackendKind::kReplay:
      if (config_.cassette.empty()) throw Error(Errc::kConfig, "replay backend needs a cassette");
      cassette_ = CassetteStore::open(config_.cassette, true);
      backend = std::make_shared<ReplayBackend>(cassette_, config_.replay_strict);
      break;
    case BackendKind::kRecord:
      if (config_.cassette.empty()) throw Error(Errc::kConfig, "record backend needs a cassette");
      cassette_ = CassetteStore::open(config_.cassette, false);
      backend = std::make_shared<RecordingBackend>(live(), cassette_);
      break;
  }
  if (backend) gateway_ = std::make_unique<Gateway>(backend, config_.logprobs);
  adapters_ = std::make_unique<AdapterPool>(
      std::chrono::milliseconds(config_.executor.policy.per_tool_timeout_ms));
  planner_ = std::make_unique<Planner>(gateway_.get(), assets_, lexicon_, registry_);
  executor_ = std::make_unique<Executor>(gateway_.get(), assets_, registry_, config_.executor,
                                         adapters_.get());
  summarizer_ = std::make_unique<Summarizer>(gateway_.get(), assets_, config_.summarizer);
}

Engine::~Engine() = default;

Engine::Run Engine::run(const QueryContext& ctx_in, std::optional<AnswerKind> kind) {
  QueryContext ctx = ctx_in;
  if (text::trim(ctx.query_text).empty()) ctx.query_text = config_.default_query;
  if (!ctx.distorted_image.valid()) throw Error(Errc::kImageDecode, "no distorted image given");

  Run out;
  auto planned = planner_->plan(ctx);
  out.plan = planned.plan;
  out.kind = kind.value_or(classify_query(ctx.query_text, out.plan));

  IntermediateState state = executor_->run(ctx, out.plan);
  state.trace.insert(state.trace.begin(), planned.trace.begin(), planned.trace.end());

  std::optional<LevelLogprobs> logprobs;
  if (out.kind == AnswerKind::kScore && out.plan.query_type == QueryType::kIqa) {
    logprobs = summarizer_->request_level_logprobs(ctx, state);
  }
  out.state = summarizer_->reflect_loop(ctx, std::move(state), out.kind, logprobs.has_value(),
                                        *planner_, *executor_, &out.reflection);
  if (out.reflection.rounds == 0) {
    out.reflection.final_check = sufficiency_check(out.state, out.kind, logprobs.has_value());
  }
  out.answer = summarizer_->generate_answer(ctx, out.state, out.kind, logprobs,
                                            out.reflection.final_check);
  out.answer.diagnostics["backend"] = to_string(config_.backend);
  out.answer.diagnostics["planner_fallback"] = planned.used_fallback;
  out.answer.diagnostics["reflection_rounds"] = out.reflection.rounds;
  size_t executed = 0;
  for (const auto& s : out.state.scores) executed += s.ok ? 1 : 0;
  out.answer.diagnostics["tools_ok"] = executed;
  out.answer.diagnostics["tools_run"] = out.state.scores.size();
  return out;
}

FinalAnswer Engine::assess(const QueryContext& ctx, std::optional<AnswerKind> kind) {
  return run(ctx, kind).answer;
}

void Engine::flush() {
  if (config_.backend == BackendKind::kRecord && cassette_) cassette_->save();
}

}  // namespace iqagent
