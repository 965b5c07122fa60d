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

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "iqagent/model.hpp"

namespace iqagent {

// A prompt asset: text file with "[system]" and "[user]" sections. Lines
// starting with "#!" are metadata (e.g. "#! version: 1") and are stripped.
struct PromptTemplate {
  std::string name;
  std::string version;
  std::string system;
  std::string user;
};

PromptTemplate parse_prompt_template(std::string_view name, std::string_view text);

// Replaces {name} placeholders that appear in vars; other braces are kept.
std::string fill_template(std::string_view text, const std::map<std::string, std::string>& vars);

// Directory holding prompts/, lexicon.json and registry.json.
std::filesystem::path default_asset_dir();

class Assets {
 public:
  explicit Assets(std::filesystem::path dir);

  // Throws kTemplateMissing.
  const PromptTemplate& prompt(std::string_view name) const;
  const json& lexicon() const;
  std::filesystem::path registry_path() const { return dir_ / "registry.json"; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::map<std::string, PromptTemplate, std::less<>> prompts_;
  json lexicon_;
};

}  // namespace iqagent
