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

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iqagent/assets.hpp"
#include "iqagent/executor.hpp"
#include "iqagent/gateway.hpp"
#include "iqagent/planner.hpp"
#include "iqagent/summarizer.hpp"
#include "iqagent/tools.hpp"

namespace iqagent {

enum class BackendKind { kNone, kRemote, kReplay, kRecord };

std::string_view to_string(BackendKind kind);

struct EngineConfig {
  BackendKind backend = BackendKind::kNone;
  RemoteOptions remote;
  std::string cassette;
  bool replay_strict = true;

  std::string asset_dir;  // empty = built-in default
  std::string registry;   // empty = <asset_dir>/registry.json
  std::vector<std::string> registry_patches;

  SummarizerConfig summarizer;
  ExecutorConfig executor;
  LevelLogprobOptions logprobs;
  std::string default_query = "What is the overall quality of this image?";
};

// Environment variables use this prefix followed by the upper-cased key,
// e.g. IQAGENT_BACKEND, IQAGENT_CASSETTE.
inline constexpr std::string_view kEnvPrefix = "IQAGENT_";

// Every recognised configuration key with a one-line description.
const std::vector<std::pair<std::string, std::string>>& config_keys();

// Applies one key=value setting. Throws kConfig for unknown keys or bad values.
void apply_setting(EngineConfig& config, std::string_view key, std::string_view value);

// Layers built-in defaults < config file (JSON object) < environment < flags.
EngineConfig load_config(const std::optional<std::string>& config_file,
                         const std::map<std::string, std::string>& environment,
                         const std::map<std::string, std::string>& flags);

// Collects IQAGENT_* variables from the process environment.
std::map<std::string, std::string> environment_settings();

// Score for global quality-rating questions, Choice when the query carries
// lettered options, FreeText otherwise (including every non-IQA query).
AnswerKind classify_query(std::string_view query, const Plan& plan);

class Engine {
 public:
  // backend_override replaces the configured live backend (remote); record
  // mode wraps it, replay mode ignores it.
  explicit Engine(EngineConfig config, std::shared_ptr<ChatBackend> backend_override = nullptr);
  ~Engine();

  struct Run {
    Plan plan;
    IntermediateState state;
    FinalAnswer answer;
    AnswerKind kind = AnswerKind::kFreeText;
    ReflectionOutcome reflection;
  };

  Run run(const QueryContext& ctx, std::optional<AnswerKind> kind = std::nullopt);
  FinalAnswer assess(const QueryContext& ctx, std::optional<AnswerKind> kind = std::nullopt);

  // Persists the cassette in record mode; no-op otherwise.
  void flush();

  Gateway* gateway() { return gateway_.get(); }
  const ToolRegistry& registry() const { return registry_; }
  const Assets& assets() const { return assets_; }
  const Lexicon& lexicon() const { return lexicon_; }
  const Planner& planner() const { return *planner_; }
  Executor& executor() { return *executor_; }
  const Summarizer& summarizer() const { return *summarizer_; }
  const EngineConfig& config() const { return config_; }

 private:
  EngineConfig config_;
  Assets assets_;
  ToolRegistry registry_;
  Lexicon lexicon_;
  std::shared_ptr<CassetteStore> cassette_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<AdapterPool> adapters_;
  std::unique_ptr<Planner> planner_;
  std::unique_ptr<Executor> executor_;
  std::unique_ptr<Summarizer> summarizer_;
};

}  // namespace iqagent
