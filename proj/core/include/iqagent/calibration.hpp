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

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "iqagent/tools.hpp"

namespace iqagent {

// Standard:  b1 * (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4 x + b5
// AsPrinted: b1 * (1/2 - 1/exp(b2 (x - b3)))       + b4 x + b5
enum class LogisticForm { kStandard, kAsPrinted };

std::string_view to_string(LogisticForm form);
LogisticForm parse_logistic_form(std::string_view s);

struct LogisticParams {
  std::array<double, 5> beta{};
  LogisticForm form = LogisticForm::kStandard;
  bool clamp = true;
};

struct MappedScore {
  double value = 0.0;
  double pre_clamp = 0.0;
  bool clamped = false;
};

// Throws kNonFiniteInput for a non-finite raw score.
MappedScore logistic_map_detailed(double raw, const LogisticParams& params);
double logistic_map(double raw, const LogisticParams& params);

// Unclamped model value and its gradient with respect to beta.
double logistic_value(double raw, const std::array<double, 5>& beta, LogisticForm form);
std::array<double, 5> logistic_gradient(double raw, const std::array<double, 5>& beta,
                                        LogisticForm form);

struct FitOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-10;
  double initial_damping = 1e-3;
};

struct FitReport {
  double rss = 0.0;
  int iterations = 0;
  double plcc = 0.0;
  bool converged = false;
  int start_index = -1;
  int starts_tried = 0;
  // RSS after every accepted step of the winning start (first entry is the start).
  std::vector<double> rss_history;
};

struct FitResult {
  LogisticParams params;
  FitReport report;
};

// Levenberg-Marquardt over a fixed multi-start grid. Throws kDegenerateData
// for constant raw or MOS, kDegenerateInput for fewer than 10 pairs or
// non-finite values. Non-convergence is reported, not thrown.
FitResult fit_logistic(const std::vector<std::pair<double, double>>& pairs,
                       LogisticForm form = LogisticForm::kStandard,
                       const FitOptions& options = {});

// Tool's fitted beta when the registry carries one; otherwise a linear
// rescale of the documented native range onto [1, 5].
LogisticParams default_params(std::string_view tool_name, const ToolRegistry& registry,
                              LogisticForm form = LogisticForm::kStandard);

}  // namespace iqagent
