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
#include <optional>
#include <string>
#include <vector>

#include "iqagent/assets.hpp"
#include "iqagent/calibration.hpp"
#include "iqagent/gateway.hpp"
#include "iqagent/model.hpp"
#include "iqagent/tools.hpp"

namespace iqagent {

struct ExecutionPolicy {
  enum class OnFailure { kSkip, kAbort };

  int max_parallel_tools = 4;
  int per_tool_timeout_ms = 30000;
  OnFailure on_tool_failure = OnFailure::kSkip;
};

struct ExecutorConfig {
  ExecutionPolicy policy;
  RankerDefaults ranker;
  KernelOptions kernels;
  LogisticForm logistic_form = LogisticForm::kStandard;
  std::string default_adapter_endpoint;
};

using Assignments = std::map<AssignmentKey, std::string>;

// Runs detection -> analysis -> selection -> execution, each gated by its plan
// flag. Model failures degrade into trace warnings; only kRegistryEmpty and
// fatal gateway errors (strict replay misses) propagate.
class Executor {
 public:
  Executor(Gateway* gateway, const Assets& assets, const ToolRegistry& registry,
           ExecutorConfig config, AdapterPool* adapters);

  DistortionMap detect_distortions(const QueryContext& ctx, const Plan& plan,
                                   std::vector<TraceEntry>& trace);
  std::vector<AnalysisEntry> analyze_distortions(const QueryContext& ctx, const Plan& plan,
                                                 const DistortionMap& detections,
                                                 std::vector<TraceEntry>& trace);
  Assignments select_tools(const QueryContext& ctx, const DistortionMap& detections,
                           const Plan& plan, std::vector<TraceEntry>& trace);
  // One score per distinct tool, sorted by tool name.
  std::vector<ToolScore> execute_tools(const QueryContext& ctx, const Plan& plan,
                                       const Assignments& assignments,
                                       std::vector<TraceEntry>& trace);

  IntermediateState run(const QueryContext& ctx, const Plan& plan);

  // Deterministic fallback for every (scope, distortion) pair.
  Assignments rank_all(const DistortionMap& detections, const Plan& plan,
                       const QueryContext& ctx) const;

  // Native tools, and adapter tools with an endpoint (their own or the default).
  bool runnable(const ToolDescriptor& tool) const;
  // Mode default when runnable and allowed, else the first such tool in registry order.
  std::optional<std::string> fallback_tool(ReferenceMode mode, const QueryContext& ctx) const;

  const ExecutorConfig& config() const { return config_; }

 private:
  ToolScore execute_one(const QueryContext& ctx, const std::string& tool,
                        std::vector<std::string>& notes);

  Gateway* gateway_;
  const Assets& assets_;
  const ToolRegistry& registry_;
  ExecutorConfig config_;
  AdapterPool* adapters_;
};

// Distortions the analysis stage works from: detections when present,
// otherwise the plan's explicit distortions.
DistortionMap analysis_input(const Plan& plan, const DistortionMap& detections);

}  // namespace iqagent
