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

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "iqagent/model.hpp"

namespace iqagent {

enum class Role { kSystem, kUser };

struct ChatMessage {
  Role role = Role::kUser;
  std::string text;
  std::vector<ImageHandle> images;
};

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  Decoding decoding;
  std::optional<std::vector<std::string>> want_logprobs_for;
};

struct ChatResponse {
  std::string text;
  // candidate -> natural-log probability
  std::optional<std::map<std::string, double>> logprobs;
  std::string backend_id;
  double latency_ms = 0.0;
};

// Throws Error(kSchemaViolation) when the request breaks its invariants
// (no user message, images on a system message, non-positive max_tokens).
void check_request(const ChatRequest& req);

// Canonical form used as the replay key: sorted keys, CRLF folded to LF,
// images replaced by the SHA-256 of their encoded bytes.
json canonical_request(const ChatRequest& req);
std::string request_digest(const ChatRequest& req);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse chat(const ChatRequest& req) = 0;
  virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Remote chat-completions endpoint

struct RemoteOptions {
  std::string endpoint;  // e.g. https://api.example.com/v1
  std::string api_key;
  std::string model;
  int timeout_ms = 60000;
  int max_retries = 2;
  int top_logprobs = 20;
};

std::unique_ptr<ChatBackend> make_remote_backend(RemoteOptions options);

// Builds the JSON body sent to /chat/completions.
json remote_request_body(const ChatRequest& req, const RemoteOptions& options);
// Parses a /chat/completions response body. Logprobs, when requested, are read
// from the top_logprobs of the first generated token that matches a candidate.
ChatResponse parse_remote_response(const json& body, const ChatRequest& req);

// ---------------------------------------------------------------------------
// Record / replay

struct CassetteEntry {
  std::string digest;
  json request_summary;
  std::string response_text;
  std::optional<std::map<std::string, double>> logprobs;
};

// JSON array of entries on disk. Concurrent readers, single writer.
class CassetteStore {
 public:
  CassetteStore() = default;
  explicit CassetteStore(std::string path);

  static std::shared_ptr<CassetteStore> open(const std::string& path, bool must_exist);

  std::optional<CassetteEntry> lookup(const std::string& digest) const;
  void put(CassetteEntry entry);
  void save() const;
  size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, CassetteEntry> entries_;
  std::vector<std::string> order_;
};

class ReplayBackend final : public ChatBackend {
 public:
  ReplayBackend(std::shared_ptr<const CassetteStore> store, bool strict)
      : store_(std::move(store)), strict_(strict) {}

  ChatResponse chat(const ChatRequest& req) override;
  std::string id() const override { return "replay"; }
  bool strict() const { return strict_; }

 private:
  std::shared_ptr<const CassetteStore> store_;
  bool strict_;
};

// Forwards to a live backend and persists each response under its digest.
class RecordingBackend final : public ChatBackend {
 public:
  RecordingBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<CassetteStore> store)
      : inner_(std::move(inner)), store_(std::move(store)) {}

  ChatResponse chat(const ChatRequest& req) override;
  std::string id() const override { return "record:" + inner_->id(); }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::shared_ptr<CassetteStore> store_;
  std::mutex write_mutex_;
};

// ---------------------------------------------------------------------------
// Gateway

struct LevelLogprobOptions {
  bool allow_fallback = true;
  double epsilon = 0.01;
};

struct LevelLogprobs {
  std::map<int, double> by_level;  // quality level 1..5 -> log p
  bool from_fallback = false;
};

// Smoothed one-hot distribution: log(1 - 4*eps) on the chosen level, log(eps) elsewhere.
std::map<int, double> smoothed_one_hot(QualityLevel chosen, double epsilon);

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<ChatBackend> backend, LevelLogprobOptions options = {})
      : backend_(std::move(backend)), options_(options) {}

  ChatResponse chat(const ChatRequest& req);

  // Requests log-probabilities for the five answer letters A..E (A = excellent).
  LevelLogprobs level_logprobs(const std::vector<ChatMessage>& prompt);

  size_t call_count() const { return calls_.load(); }
  const ChatBackend& backend() const { return *backend_; }
  // True when a backend error must abort the pipeline instead of degrading.
  bool is_fatal(const class Error& e) const;

 private:
  std::shared_ptr<ChatBackend> backend_;
  LevelLogprobOptions options_;
  std::atomic<size_t> calls_{0};
};

}  // namespace iqagent
