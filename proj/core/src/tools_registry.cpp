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

#include <algorithm>
#include <cmath>
#include <set>

#include "iqagent/error.hpp"
#include "iqagent/tools.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

namespace iqagent {

namespace {

constexpr std::pair<std::string_view, NativeKernel> kKernels[] = {
    {"PSNR", NativeKernel::kPsnr},
    {"SSIM", NativeKernel::kSsim},
    {"MS-SSIM", NativeKernel::kMsSsim},
    {"GMSD", NativeKernel::kGmsd},
};

std::string_view kernel_name(NativeKernel k) {
  for (const auto& [name, kernel] : kKernels) {
    if (kernel == k) return name;
  }
  return "?";
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(Errc::kMalformedDescriptor, what);
}

}  // namespace

std::string_view to_string(ToolMode mode) { return mode == ToolMode::kFR ? "FR" : "NR"; }

ToolMode to_tool_mode(ReferenceMode mode) {
  return mode == ReferenceMode::kFullReference ? ToolMode::kFR : ToolMode::kNR;
}

json encode(const ToolDescriptor& d) {
  json best = json::array();
  for (const auto& b : d.best_at) {
    best.push_back({{"category", b.category}, {"subtype", b.subtype ? json(*b.subtype) : json(nullptr)}});
  }
  json binding;
  switch (d.binding.kind) {
    case ToolBinding::Kind::kNative:
      binding = {{"kind", "Native"}, {"kernel", kernel_name(d.binding.kernel)}};
      break;
    case ToolBinding::Kind::kAdapter:
      binding = {{"kind", "Adapter"}, {"endpoint", d.binding.endpoint}};
      break;
    case ToolBinding::Kind::kUnavailable:
      binding = {{"kind", "Unavailable"}};
      break;
  }
  json out = {{"name", d.name},
              {"mode", to_string(d.mode)},
              {"best_at", std::move(best)},
              {"description", d.description},
              {"beta", d.beta ? json(*d.beta) : json(nullptr)},
              {"binding", std::move(binding)},
              {"higher_better", d.higher_better}};
  if (!d.aliases.empty()) out["aliases"] = d.aliases;
  if (d.native_range) out["native_range"] = *d.native_range;
  return out;
}

ToolDescriptor decode_descriptor(const json& j) {
  if (!j.is_object()) malformed("descriptor must be an object");
  ToolDescriptor d;
  if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty()) {
    malformed("descriptor without a name");
  }
  d.name = j["name"].get<std::string>();
  const auto where = " (tool " + d.name + ")";

  const auto mode = j.value("mode", "");
  if (mode == "FR") d.mode = ToolMode::kFR;
  else if (mode == "NR") d.mode = ToolMode::kNR;
  else malformed("mode must be FR or NR" + where);

  if (j.contains("aliases")) {
    if (!j["aliases"].is_array()) malformed("aliases must be a list" + where);
    for (const auto& a : j["aliases"]) {
      if (!a.is_string()) malformed("alias must be a string" + where);
      d.aliases.push_back(a.get<std::string>());
    }
  }
  for (const auto& b : j.value("best_at", json::array())) {
    BestAt entry;
    if (b.is_string()) {
      entry.category = b.get<std::string>();
    } else if (b.is_object() && b.contains("category") && b["category"].is_string()) {
      entry.category = b["category"].get<std::string>();
      if (b.contains("subtype") && b["subtype"].is_string()) entry.subtype = b["subtype"].get<std::string>();
    } else {
      malformed("best_at entries need a category" + where);
    }
    d.best_at.push_back(std::move(entry));
  }
  d.description = j.value("description", "");

  if (j.contains("beta") && !j["beta"].is_null()) {
    const auto& b = j["beta"];
    if (!b.is_array() || b.size() != 5) malformed("beta must list five numbers" + where);
    std::array<double, 5> beta{};
    for (size_t i = 0; i < 5; ++i) {
      if (!b[i].is_number() || !std::isfinite(b[i].get<double>())) {
        malformed("beta must list five finite numbers" + where);
      }
      beta[i] = b[i].get<double>();
    }
    d.beta = beta;
  }

  const auto binding = j.value("binding", json::object());
  const auto kind = binding.is_object() ? binding.value("kind", "Unavailable") : std::string("?");
  if (kind == "Native") {
    d.binding.kind = ToolBinding::Kind::kNative;
    const auto kernel = binding.value("kernel", d.name);
    bool found = false;
    for (const auto& [name, k] : kKernels) {
      if (name == kernel && name == d.name) {
        d.binding.kernel = k;
        found = true;
      }
    }
    if (!found) malformed("Native binding is limited to PSNR, SSIM, MS-SSIM and GMSD" + where);
    if (d.mode != ToolMode::kFR) malformed("native kernels are full-reference" + where);
  } else if (kind == "Adapter") {
    d.binding.kind = ToolBinding::Kind::kAdapter;
    d.binding.endpoint = binding.value("endpoint", "");
  } else if (kind == "Unavailable") {
    d.binding.kind = ToolBinding::Kind::kUnavailable;
  } else {
    malformed("unknown binding kind '" + kind + "'" + where);
  }

  if (j.contains("native_range") && !j["native_range"].is_null()) {
    const auto& r = j["native_range"];
    if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number() ||
        !(r[0].get<double>() < r[1].get<double>())) {
      malformed("native_range must be [low, high] with low < high" + where);
    }
    d.native_range = std::array<double, 2>{r[0].get<double>(), r[1].get<double>()};
  }
  d.higher_better = j.value("higher_better", true);
  return d;
}

// ---------------------------------------------------------------------------

ToolRegistry::ToolRegistry(std::vector<ToolDescriptor> tools) : tools_(std::move(tools)) {
  std::set<std::string> seen;
  for (const auto& t : tools_) {
    for (const auto& key : [&] {
           std::vector<std::string> keys{text::lower(t.name)};
           for (const auto& a : t.aliases) keys.push_back(text::lower(a));
           return keys;
         }()) {
      if (!seen.insert(key).second) {
        throw Error(Errc::kDuplicateTool, "duplicate tool name or alias '" + key + "'");
      }
    }
  }
}

ToolRegistry ToolRegistry::from_json(const json& j) {
  const json& list = j.is_object() && j.contains("tools") ? j["tools"] : j;
  if (!list.is_array()) malformed("registry must be a JSON list of descriptors");
  std::vector<ToolDescriptor> tools;
  for (const auto& d : list) tools.push_back(decode_descriptor(d));
  return ToolRegistry(std::move(tools));
}

ToolRegistry ToolRegistry::load(const std::string& path) {
  const auto doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) malformed("registry is not valid JSON: " + path);
  return from_json(doc);
}

void ToolRegistry::apply_patch(const json& patch) {
  const json& tools = patch.is_object() && patch.contains("tools") ? patch["tools"] : patch;
  if (!tools.is_object()) malformed("registry patch must map tool names to {beta: [...]}");
  for (const auto& [name, entry] : tools.items()) {
    const auto* found = find(name);
    if (!found) throw Error(Errc::kUnknownTool, "patch names unknown tool '" + name + "'");
    auto& d = tools_[static_cast<size_t>(found - tools_.data())];
    const json& beta = entry.is_object() ? entry.value("beta", json()) : entry;
    json probe = {{"name", d.name}, {"mode", to_string(d.mode)}, {"beta", beta}};
    d.beta = decode_descriptor(probe).beta;
  }
}

const ToolDescriptor* ToolRegistry::find(std::string_view name) const {
  for (const auto& t : tools_) {
    if (t.name == name) return &t;
  }
  for (const auto& t : tools_) {
    for (const auto& a : t.aliases) {
      if (a == name) return &t;
    }
  }
  for (const auto& t : tools_) {
    if (text::iequals(t.name, name)) return &t;
    for (const auto& a : t.aliases) {
      if (text::iequals(a, name)) return &t;
    }
  }
  return nullptr;
}

const ToolDescriptor& ToolRegistry::at(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw Error(Errc::kUnknownTool, "unknown tool '" + std::string(name) + "'");
}

json ToolRegistry::to_json() const {
  json out = json::array();
  for (const auto& t : tools_) out.push_back(encode(t));
  return out;
}

// ---------------------------------------------------------------------------

std::string rank_tool(const DistortionCategory& distortion, ToolMode mode,
                      const ToolRegistry& registry, const RankerDefaults& defaults,
                      const std::vector<std::string>* allowed) {
  auto permitted = [&](const ToolDescriptor& t) {
    if (!allowed) return true;
    return std::any_of(allowed->begin(), allowed->end(),
                       [&](const std::string& a) { return registry.find(a) == &t; });
  };

  const ToolDescriptor* best = nullptr;
  const ToolDescriptor* first = nullptr;
  int best_score = 0;
  for (const auto& t : registry.tools()) {
    if (t.mode != mode || t.binding.kind == ToolBinding::Kind::kUnavailable || !permitted(t)) continue;
    if (!first) first = &t;
    int score = 0;
    for (const auto& b : t.best_at) {
      if (distortion.subtype && b.subtype && text::iequals(*distortion.subtype, *b.subtype)) {
        score = 2;
        break;
      }
      if (parse_category(b.category) == distortion.name) score = std::max(score, 1);
    }
    if (score > best_score) {
      best_score = score;
      best = &t;
    }
  }
  if (best) return best->name;

  const auto& fallback = mode == ToolMode::kFR ? defaults.fr_default : defaults.nr_default;
  const auto* d = registry.find(fallback);
  if (d && permitted(*d)) return d->name;
  if (first) return first->name;
  return fallback;
}

}  // namespace iqagent
