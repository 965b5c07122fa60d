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

// The only translation unit that includes cpp-httplib.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "iqagent/error.hpp"
#include "iqagent/gateway.hpp"
#include "iqagent/util.hpp"
#include "net.hpp"
#include "text.hpp"

namespace iqagent {

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

Url split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::kConfig, "endpoint is not a URL: " + url);
  const auto slash = url.find('/', scheme_end + 3);
  Url out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

void set_timeouts(httplib::Client& cli, std::chrono::milliseconds timeout) {
  const auto sec = static_cast<time_t>(timeout.count() / 1000);
  const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
}

std::string mime_type(const std::string& format) {
  if (format == "jpeg") return "image/jpeg";
  return "image/png";
}

std::string data_url(const ImageHandle& img) {
  // Remote endpoints take PNG and JPEG only.
  if (img.format() == "png" || img.format() == "jpeg") {
    return "data:" + mime_type(img.format()) + ";base64," + base64_encode(img.encoded());
  }
  return "data:image/png;base64," + base64_encode(encode_png(img.raster()));
}

double log_add(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

std::string strip_token(std::string_view token) {
  auto t = text::trim(token);
  while (!t.empty() && (t.front() == '(' || t.front() == '[')) t.remove_prefix(1);
  while (!t.empty() && (t.back() == ')' || t.back() == '.' || t.back() == ']' || t.back() == ':')) {
    t.remove_suffix(1);
  }
  return std::string(t);
}

class RemoteBackend final : public ChatBackend {
 public:
  explicit RemoteBackend(RemoteOptions options)
      : options_(std::move(options)), url_(split_url(options_.endpoint)) {}

  ChatResponse chat(const ChatRequest& req) override {
    const auto body = remote_request_body(req, options_).dump();
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(250 << (attempt - 1)));
      httplib::Client cli(url_.origin);
      set_timeouts(cli, std::chrono::milliseconds(options_.timeout_ms));
      const auto start = std::chrono::steady_clock::now();
      auto res = cli.Post(url_.path + "/chat/completions", headers, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw Error(Errc::kHttpError, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
      }
      const auto doc = json::parse(res->body, nullptr, false);
      if (doc.is_discarded()) throw Error(Errc::kHttpError, "endpoint returned non-JSON body");
      auto out = parse_remote_response(doc, req);
      out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return out;
    }
    if (last_error.rfind("HTTP ", 0) == 0) throw Error(Errc::kHttpError, last_error + " after retries");
    throw Error(Errc::kTimeout, "endpoint unreachable: " + last_error);
  }

  std::string id() const override { return "remote:" + options_.model; }

 private:
  RemoteOptions options_;
  Url url_;
};

class HttpAdapterClient final : public AdapterClient {
 public:
  HttpAdapterClient(const std::string& base, std::chrono::milliseconds timeout)
      : url_(split_url(base)), client_(url_.origin) {
    set_timeouts(client_, timeout);
  }

  AdapterHandshake handshake() override {
    std::lock_guard lock(mutex_);
    return handshake_locked();
  }

  AdapterScoreResponse score(const AdapterScoreRequest& req) override {
    std::lock_guard lock(mutex_);
    if (!handshaken_) handshake_locked();
    auto res = client_.Post(url_.path + "/score", encode(req).dump(), "application/json");
    return decode_adapter_response(parse(res));
  }

 private:
  json parse(const httplib::Result& res) {
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout ||
          err == httplib::Error::Write) {
        throw Error(Errc::kTimeout, "adapter did not answer in time");
      }
      throw Error(Errc::kAdapterProtocolError, "adapter unreachable: " + httplib::to_string(err));
    }
    auto doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      throw Error(Errc::kAdapterProtocolError, "adapter reply is not a JSON object");
    }
    return doc;
  }

  AdapterHandshake handshake_locked() {
    const auto doc = parse(client_.Get(url_.path + "/handshake"));
    AdapterHandshake hs;
    hs.version = doc.value("version", "");
    if (hs.version != kAdapterProtocolVersion) {
      throw Error(Errc::kAdapterProtocolError, "adapter speaks '" + hs.version + "'");
    }
    for (const auto& t : doc.value("tools", json::array())) {
      if (t.is_string()) hs.tools.push_back(t.get<std::string>());
    }
    handshaken_ = true;
    return hs;
  }

  Url url_;
  httplib::Client client_;
  std::mutex mutex_;
  bool handshaken_ = false;
};

}  // namespace

json remote_request_body(const ChatRequest& req, const RemoteOptions& options) {
  json messages = json::array();
  for (const auto& m : req.messages) {
    if (m.role == Role::kSystem) {
      messages.push_back({{"role", "system"}, {"content", m.text}});
      continue;
    }
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", m.text}});
    for (const auto& img : m.images) {
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url(img)}}}});
    }
    messages.push_back({{"role", "user"}, {"content", std::move(content)}});
  }
  json body = {{"model", options.model},
               {"messages", std::move(messages)},
               {"temperature", req.decoding.temperature},
               {"max_tokens", req.decoding.max_tokens}};
  if (req.want_logprobs_for) {
    body["logprobs"] = true;
    body["top_logprobs"] = options.top_logprobs;
  }
  return body;
}

ChatResponse parse_remote_response(const json& body, const ChatRequest& req) {
  ChatResponse out;
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw Error(Errc::kHttpError, "response has no choices");
  }
  const auto& choice = body["choices"][0];
  const auto& content = choice.value("message", json::object()).value("content", json());
  out.text = content.is_string() ? content.get<std::string>() : "";

  if (!req.want_logprobs_for) return out;
  const auto& candidates = *req.want_logprobs_for;
  auto candidate_of = [&](std::string_view token) -> std::optional<std::string> {
    const auto t = strip_token(token);
    for (const auto& c : candidates) {
      if (t == c) return c;
    }
    return std::nullopt;
  };

  const auto lp = choice.value("logprobs", json());
  if (!lp.is_object() || !lp.contains("content") || !lp["content"].is_array()) return out;
  for (const auto& tok : lp["content"]) {
    if (!candidate_of(tok.value("token", ""))) continue;
    std::map<std::string, double> found;
    auto add = [&](const json& entry) {
      auto c = candidate_of(entry.value("token", ""));
      if (!c || !entry.contains("logprob") || !entry["logprob"].is_number()) return;
      const double v = entry["logprob"].get<double>();
      auto [it, inserted] = found.emplace(*c, v);
      if (!inserted) it->second = log_add(it->second, v);
    };
    if (tok.contains("top_logprobs") && tok["top_logprobs"].is_array()) {
      for (const auto& alt : tok["top_logprobs"]) add(alt);
    } else {
      add(tok);
    }
    out.logprobs = std::move(found);
    break;
  }
  return out;
}

std::unique_ptr<ChatBackend> make_remote_backend(RemoteOptions options) {
  if (options.endpoint.empty()) throw Error(Errc::kConfig, "remote backend needs an endpoint");
  return std::make_unique<RemoteBackend>(std::move(options));
}

namespace net {

std::unique_ptr<AdapterClient> make_http_adapter_client(const std::string& base_url,
                                                        std::chrono::milliseconds timeout) {
  return std::make_unique<HttpAdapterClient>(base_url, timeout);
}

}  // namespace net

}  // namespace iqagent
