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

#include "iqagent/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>

#include "iqagent/error.hpp"
#include "iqagent/json_io.hpp"
#include "iqagent/util.hpp"
#include "text.hpp"

namespace iqagent {

namespace {

std::string normalize_newlines(std::string s) { return text::replace_all(std::move(s), "\r\n", "\n"); }

json encode_logprobs(const std::optional<std::map<std::string, double>>& lp) {
  if (!lp) return nullptr;
  json out = json::object();
  for (const auto& [k, v] : *lp) out[k] = v;
  return out;
}

}  // namespace

void check_request(const ChatRequest& req) {
  bool has_user = false;
  for (const auto& m : req.messages) {
    if (m.role == Role::kUser) has_user = true;
    if (m.role == Role::kSystem && !m.images.empty()) {
      throw Error(Errc::kSchemaViolation, "images may only be attached to user messages");
    }
    for (const auto& img : m.images) {
      if (img.encoded().empty()) throw Error(Errc::kSchemaViolation, "attached image has no bytes");
    }
  }
  if (!has_user) throw Error(Errc::kSchemaViolation, "chat request needs at least one user message");
  if (req.decoding.max_tokens <= 0) throw Error(Errc::kSchemaViolation, "max_tokens must be positive");
  if (!(req.decoding.temperature >= 0.0)) {
    throw Error(Errc::kSchemaViolation, "temperature must be non-negative");
  }
}

json canonical_request(const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    json images = json::array();
    for (const auto& img : m.images) images.push_back(img.digest());
    messages.push_back({{"role", m.role == Role::kSystem ? "system" : "user"},
                        {"text", normalize_newlines(m.text)},
                        {"images", std::move(images)}});
  }
  return {{"messages", std::move(messages)},
          {"decoding",
           {{"temperature", req.decoding.temperature}, {"max_tokens", req.decoding.max_tokens}}},
          {"want_logprobs_for",
           req.want_logprobs_for ? json(*req.want_logprobs_for) : json(nullptr)}};
}

std::string request_digest(const ChatRequest& req) {
  // nlohmann::json objects are key-sorted, so dump() is already canonical.
  return sha256_hex(canonical_request(req).dump());
}

// ---------------------------------------------------------------------------

CassetteStore::CassetteStore(std::string path) : path_(std::move(path)) {}

std::shared_ptr<CassetteStore> CassetteStore::open(const std::string& path, bool must_exist) {
  auto store = std::make_shared<CassetteStore>(path);
  if (!std::filesystem::exists(path)) {
    if (must_exist) throw Error(Errc::kLoadError, "cassette not found: " + path);
    return store;
  }
  const auto doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) {
    throw Error(Errc::kLoadError, "cassette is not a JSON array: " + path);
  }
  for (const auto& e : doc) {
    CassetteEntry entry;
    entry.digest = e.at("digest").get<std::string>();
    entry.request_summary = e.value("request_summary", json(nullptr));
    entry.response_text = e.at("response_text").get<std::string>();
    if (e.contains("logprobs") && e["logprobs"].is_object()) {
      entry.logprobs = e["logprobs"].get<std::map<std::string, double>>();
    }
    store->put(std::move(entry));
  }
  return store;
}

std::optional<CassetteEntry> CassetteStore::lookup(const std::string& digest) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CassetteStore::put(CassetteEntry entry) {
  std::unique_lock lock(mutex_);
  auto [it, inserted] = entries_.try_emplace(entry.digest, entry);
  if (inserted) {
    order_.push_back(entry.digest);
  } else {
    it->second = std::move(entry);
  }
}

void CassetteStore::save() const {
  std::shared_lock lock(mutex_);
  json doc = json::array();
  for (const auto& d : order_) {
    const auto& e = entries_.at(d);
    doc.push_back({{"digest", e.digest},
                   {"request_summary", e.request_summary},
                   {"response_text", e.response_text},
                   {"logprobs", encode_logprobs(e.logprobs)}});
  }
  write_file_atomic(path_, doc.dump(2) + "\n");
}

size_t CassetteStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

ChatResponse ReplayBackend::chat(const ChatRequest& req) {
  const auto digest = request_digest(req);
  auto entry = store_->lookup(digest);
  if (!entry) {
    throw Error(Errc::kReplayMiss, "no cassette entry for request " + digest.substr(0, 16));
  }
  ChatResponse r;
  r.text = entry->response_text;
  if (req.want_logprobs_for) r.logprobs = entry->logprobs;
  r.backend_id = id();
  return r;
}

ChatResponse RecordingBackend::chat(const ChatRequest& req) {
  auto resp = inner_->chat(req);
  json summary = canonical_request(req);
  // Keep the cassette readable: the full prompt text lives in the assets.
  for (auto& m : summary["messages"]) {
    auto t = m["text"].get<std::string>();
    if (t.size() > 160) m["text"] = t.substr(0, 160) + "...";
  }
  store_->put({request_digest(req), std::move(summary), resp.text, resp.logprobs});
  std::lock_guard lock(write_mutex_);
  store_->save();
  return resp;
}

// ---------------------------------------------------------------------------

std::map<int, double> smoothed_one_hot(QualityLevel chosen, double epsilon) {
  if (!(epsilon > 0.0) || epsilon >= 0.2) {
    throw Error(Errc::kConfig, "logprob epsilon must lie in (0, 0.2)");
  }
  std::map<int, double> out;
  for (int c = 1; c <= 5; ++c) {
    out[c] = c == chosen.value() ? std::log1p(-4.0 * epsilon) : std::log(epsilon);
  }
  return out;
}

ChatResponse Gateway::chat(const ChatRequest& req) {
  check_request(req);
  calls_.fetch_add(1);
  auto resp = backend_->chat(req);
  if (resp.backend_id.empty()) resp.backend_id = backend_->id();
  if (!req.want_logprobs_for) resp.logprobs.reset();
  return resp;
}

namespace {

// Maps a candidate key ("A", "Good", "good") to its quality level.
std::optional<int> level_of(const std::string& key) {
  const auto k = text::trim(key);
  if (k.size() == 1 && std::isalpha(static_cast<unsigned char>(k[0]))) {
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(k[0])));
    if (up >= 'A' && up <= 'E') return 5 - (up - 'A');
    return std::nullopt;
  }
  try {
    return QualityLevel::from_label(k).value();
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<QualityLevel> chosen_level(const std::string& reply) {
  // "C", "C.", "(C) Fair", "Answer: C", then bare labels ("Fair").
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (size_t i = 0; i < reply.size(); ++i) {
    const char c = reply[i];
    if (c < 'A' || c > 'E') continue;
    if (i > 0 && is_word(reply[i - 1])) continue;
    if (i + 1 < reply.size() && is_word(reply[i + 1])) continue;
    return QualityLevel::from_letter(c);
  }
  for (const auto& w : text::words(reply)) {
    if (w.size() > 1) {
      if (auto l = level_of(w)) return QualityLevel(*l);
    }
  }
  return std::nullopt;
}

}  // namespace

LevelLogprobs Gateway::level_logprobs(const std::vector<ChatMessage>& prompt) {
  ChatRequest req;
  req.messages = prompt;
  req.decoding.max_tokens = 8;
  req.want_logprobs_for = std::vector<std::string>{"A", "B", "C", "D", "E"};
  auto resp = chat(req);

  LevelLogprobs out;
  if (resp.logprobs && !resp.logprobs->empty()) {
    for (const auto& [key, lp] : *resp.logprobs) {
      if (auto l = level_of(key)) out.by_level[*l] = lp;
    }
    if (out.by_level.size() != 5) {
      throw Error(Errc::kBackendUnsupported, "backend log-probabilities do not cover all five levels");
    }
    return out;
  }
  if (!options_.allow_fallback) {
    throw Error(Errc::kBackendUnsupported, "backend returned no log-probabilities and fallback is off");
  }
  auto chosen = chosen_level(resp.text);
  if (!chosen) {
    throw Error(Errc::kBackendUnsupported, "fallback reply names no quality level: " + resp.text);
  }
  out.by_level = smoothed_one_hot(*chosen, options_.epsilon);
  out.from_fallback = true;
  return out;
}

bool Gateway::is_fatal(const Error& e) const {
  if (e.code() != Errc::kReplayMiss) return false;
  const auto* replay = dynamic_cast<const ReplayBackend*>(backend_.get());
  return replay != nullptr && replay->strict();
}

}  // namespace iqagent
