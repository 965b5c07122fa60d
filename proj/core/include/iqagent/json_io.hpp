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
#include <string>
#include <string_view>

#include "iqagent/model.hpp"

namespace iqagent {

// Strict decoding rejects unknown object members with Errc::kUnknownField;
// lenient decoding ignores them.
enum class ParseMode { kStrict, kLenient };

json encode(const DistortionCategory& v);
json encode(const SeverityLevel& v);
json encode(const QualityLevel& v);
json encode(const PlanFlags& v);
json encode(const Plan& v);
json encode(const AnalysisEntry& v);
json encode(const ToolScore& v);
json encode(const TraceEntry& v);
json encode(const IntermediateState& v);
json encode(const FinalAnswer& v);
json encode(const QueryContext& v);
json encode(const DistortionMap& v);

template <class T>
T decode(const json& j, ParseMode mode = ParseMode::kStrict);

template <> DistortionCategory decode<DistortionCategory>(const json&, ParseMode);
template <> SeverityLevel decode<SeverityLevel>(const json&, ParseMode);
template <> QualityLevel decode<QualityLevel>(const json&, ParseMode);
template <> PlanFlags decode<PlanFlags>(const json&, ParseMode);
template <> Plan decode<Plan>(const json&, ParseMode);
template <> AnalysisEntry decode<AnalysisEntry>(const json&, ParseMode);
template <> ToolScore decode<ToolScore>(const json&, ParseMode);
template <> TraceEntry decode<TraceEntry>(const json&, ParseMode);
template <> IntermediateState decode<IntermediateState>(const json&, ParseMode);
template <> FinalAnswer decode<FinalAnswer>(const json&, ParseMode);
template <> QueryContext decode<QueryContext>(const json&, ParseMode);
template <> DistortionMap decode<DistortionMap>(const json&, ParseMode);

// Canonical (sorted keys, no whitespace) digest of the state. Stage timings
// are excluded so identical evidence yields identical digests.
std::string state_digest(const IntermediateState& state);

// Finds the first balanced JSON object in free-form model output, tolerating
// surrounding prose and ``` fences. Returns nullopt if none parses.
std::optional<json> extract_json_object(std::string_view text);

}  // namespace iqagent
