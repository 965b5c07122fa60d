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

#include "iqagent/assets.hpp"

#include <cstdlib>
#include <sstream>

#include "iqagent/error.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

namespace iqagent {

PromptTemplate parse_prompt_template(std::string_view name, std::string_view text) {
  PromptTemplate t;
  t.name = std::string(name);
  std::string* section = nullptr;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("#!", 0) == 0) {
      const auto meta = text::trim(std::string_view(line).substr(2));
      const auto colon = meta.find(':');
      if (colon != std::string_view::npos && text::trim(meta.substr(0, colon)) == "version") {
        t.version = std::string(text::trim(meta.substr(colon + 1)));
      }
      continue;
    }
    const auto trimmed = text::trim(line);
    if (trimmed == "[system]") {
      section = &t.system;
      continue;
    }
    if (trimmed == "[user]") {
      section = &t.user;
      continue;
    }
    if (!section) {
      if (trimmed.empty()) continue;
      throw Error(Errc::kTemplateMissing, "prompt '" + t.name + "' has text outside [system]/[user]");
    }
    section->append(line).push_back('\n');
  }
  auto strip = [](std::string& s) { s = std::string(text::trim(s)); };
  strip(t.system);
  strip(t.user);
  if (t.user.empty()) throw Error(Errc::kTemplateMissing, "prompt '" + t.name + "' has no [user] section");
  return t;
}

std::string fill_template(std::string_view text, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto key = text.substr(i + 1, close - i - 1);
        auto it = vars.find(std::string(key));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

std::filesystem::path default_asset_dir() {
  for (const char* candidate : {IQAGENT_SOURCE_ASSET_DIR, IQAGENT_INSTALL_ASSET_DIR}) {
    std::error_code ec;
    if (std::filesystem::exists(std::filesystem::path(candidate) / "registry.json", ec)) return candidate;
  }
  return IQAGENT_INSTALL_ASSET_DIR;
}

Assets::Assets(std::filesystem::path dir) : dir_(std::move(dir)) {
  const auto lex = dir_ / "lexicon.json";
  if (std::filesystem::exists(lex)) {
    lexicon_ = json::parse(read_file(lex.string()), nullptr, false);
    if (lexicon_.is_discarded()) throw Error(Errc::kLoadError, "lexicon is not valid JSON: " + lex.string());
  } else {
    lexicon_ = json::object();
  }
  const auto prompts = dir_ / "prompts";
  if (std::filesystem::is_directory(prompts)) {
    for (const auto& entry : std::filesystem::directory_iterator(prompts)) {
      if (entry.path().extension() != ".txt") continue;
      const auto name = entry.path().stem().string();
      prompts_.emplace(name, parse_prompt_template(name, read_file(entry.path().string())));
    }
  }
}

const PromptTemplate& Assets::prompt(std::string_view name) const {
  auto it = prompts_.find(name);
  if (it == prompts_.end()) {
    throw Error(Errc::kTemplateMissing, "prompt template '" + std::string(name) + "' not found in " +
                                            (dir_ / "prompts").string());
  }
  return it->second;
}

const json& Assets::lexicon() const { return lexicon_; }

}  // namespace iqagent
