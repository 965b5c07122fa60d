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

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>

#include "iqagent/error.hpp"
#include "iqagent/tools.hpp"
#include "iqagent/util.hpp"
#include "net.hpp"

namespace iqagent {

namespace {

json encode_image(const AdapterImage& img) {
  return {{"data", base64_encode(img.data)}, {"format", img.format}};
}

AdapterImage decode_image(const json& j) {
  if (!j.is_object() || !j.contains("data") || !j["data"].is_string()) {
    throw Error(Errc::kAdapterProtocolError, "image must be {data, format}");
  }
  return {base64_decode(j["data"].get<std::string>()), j.value("format", "")};
}

[[noreturn]] void protocol_error(const std::string& what) {
  throw Error(Errc::kAdapterProtocolError, what);
}

}  // namespace

json encode(const AdapterScoreRequest& r) {
  return {{"tool", r.tool},
          {"distorted", encode_image(r.distorted)},
          {"reference", r.reference ? encode_image(*r.reference) : json(nullptr)},
          {"request_id", r.request_id},
          {"metadata", r.metadata}};
}

json encode(const AdapterScoreResponse& r) {
  return {{"request_id", r.request_id},
          {"raw_score", r.raw_score ? json(*r.raw_score) : json(nullptr)},
          {"status", r.status},
          {"message", r.message}};
}

AdapterScoreRequest decode_adapter_request(const json& j) {
  if (!j.is_object()) protocol_error("score request must be an object");
  AdapterScoreRequest r;
  if (!j.contains("tool") || !j["tool"].is_string()) protocol_error("score request without tool");
  if (!j.contains("request_id") || !j["request_id"].is_string()) {
    protocol_error("score request without request_id");
  }
  r.tool = j["tool"].get<std::string>();
  r.request_id = j["request_id"].get<std::string>();
  r.distorted = decode_image(j.value("distorted", json()));
  if (j.contains("reference") && !j["reference"].is_null()) r.reference = decode_image(j["reference"]);
  if (j.contains("metadata") && j["metadata"].is_object()) r.metadata = j["metadata"];
  return r;
}

AdapterScoreResponse decode_adapter_response(const json& j) {
  if (!j.is_object()) protocol_error("score reply must be a JSON object");
  if (!j.contains("request_id") || !j["request_id"].is_string()) protocol_error("score reply without request_id");
  if (!j.contains("status") || !j["status"].is_string()) protocol_error("score reply without status");
  AdapterScoreResponse r;
  r.request_id = j["request_id"].get<std::string>();
  r.status = j["status"].get<std::string>();
  r.message = j.value("message", "");
  if (r.status != "ok" && r.status != "error") protocol_error("unknown status '" + r.status + "'");
  if (j.contains("raw_score") && !j["raw_score"].is_null()) {
    if (!j["raw_score"].is_number()) protocol_error("raw_score must be a number");
    r.raw_score = j["raw_score"].get<double>();
  }
  if (r.ok() && (!r.raw_score || !std::isfinite(*r.raw_score))) {
    protocol_error("status ok without a finite raw_score");
  }
  return r;
}

// ---------------------------------------------------------------------------
// stdio adapter: one child process, newline-delimited JSON both ways.

namespace {

class StdioAdapterClient final : public AdapterClient {
 public:
  StdioAdapterClient(std::string command, std::chrono::milliseconds timeout)
      : command_(std::move(command)), timeout_(timeout) {}

  ~StdioAdapterClient() override { stop(); }

  AdapterHandshake handshake() override {
    std::lock_guard lock(mutex_);
    return handshake_locked();
  }

  AdapterScoreResponse score(const AdapterScoreRequest& req) override {
    std::lock_guard lock(mutex_);
    if (!handshaken_) handshake_locked();
    json msg = encode(req);
    msg["type"] = "score";
    const auto reply = exchange(msg);
    return decode_adapter_response(reply);
  }

 private:
  AdapterHandshake handshake_locked() {
    const auto reply = exchange({{"type", "handshake"}, {"version", kAdapterProtocolVersion}});
    AdapterHandshake hs;
    if (!reply.contains("version") || !reply["version"].is_string()) {
      protocol_error("handshake reply without version");
    }
    hs.version = reply["version"].get<std::string>();
    if (hs.version != kAdapterProtocolVersion) {
      protocol_error("adapter speaks '" + hs.version + "', expected " + std::string(kAdapterProtocolVersion));
    }
    for (const auto& t : reply.value("tools", json::array())) {
      if (t.is_string()) hs.tools.push_back(t.get<std::string>());
    }
    handshaken_ = true;
    return hs;
  }

  void start() {
    int to_child[2];
    int from_child[2];
    if (pipe2(to_child, O_CLOEXEC) != 0) throw Error(Errc::kIo, "pipe failed");
    if (pipe2(from_child, O_CLOEXEC) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw Error(Errc::kIo, "pipe failed");
    }
    // exec so pid_ is the adapter itself, not a shell that would orphan it.
    const std::string line = "exec " + command_;
    const pid_t pid = fork();
    if (pid < 0) throw Error(Errc::kIo, std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      execl("/bin/sh", "sh", "-c", line.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    pid_ = pid;
    in_ = to_child[1];
    out_ = from_child[0];
    buffer_.clear();
    handshaken_ = false;
  }

  void stop() {
    if (in_ >= 0) close(in_);
    if (out_ >= 0) close(out_);
    in_ = out_ = -1;
    if (pid_ > 0) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    pid_ = -1;
    handshaken_ = false;
  }

  void write_all(const std::string& line) {
    // Block SIGPIPE for this thread so a dead child surfaces as EPIPE.
    sigset_t pipe_set, old_set;
    sigemptyset(&pipe_set);
    sigaddset(&pipe_set, SIGPIPE);
    pthread_sigmask(SIG_BLOCK, &pipe_set, &old_set);
    size_t off = 0;
    int err = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(in_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        err = errno;
        break;
      }
      off += static_cast<size_t>(n);
    }
    if (err == EPIPE) {
      const timespec zero{0, 0};
      sigtimedwait(&pipe_set, nullptr, &zero);
    }
    pthread_sigmask(SIG_SETMASK, &old_set, nullptr);
    if (err != 0) throw Error(Errc::kAdapterProtocolError, "adapter process closed its input");
  }

  std::string read_line(std::chrono::steady_clock::time_point deadline) {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw Error(Errc::kTimeout, "adapter did not answer in time");
      pollfd pfd{out_, POLLIN, 0};
      const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc == 0) throw Error(Errc::kTimeout, "adapter did not answer in time");
      char chunk[65536];
      const ssize_t n = ::read(out_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw Error(Errc::kAdapterProtocolError, "adapter process exited");
      buffer_.append(chunk, static_cast<size_t>(n));
    }
  }

  json exchange(const json& msg) {
    if (pid_ < 0) start();
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    try {
      write_all(msg.dump() + "\n");
      const auto line = read_line(deadline);
      auto reply = json::parse(line, nullptr, false);
      if (reply.is_discarded() || !reply.is_object()) protocol_error("adapter reply is not a JSON object");
      return reply;
    } catch (const Error&) {
      // Stream state is unknown after a failure; the next call starts fresh.
      stop();
      throw;
    }
  }

  std::string command_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  pid_t pid_ = -1;
  int in_ = -1;
  int out_ = -1;
  std::string buffer_;
  bool handshaken_ = false;
};

}  // namespace

std::unique_ptr<AdapterClient> make_adapter_client(const std::string& endpoint,
                                                   std::chrono::milliseconds timeout) {
  constexpr std::string_view kStdio = "stdio:";
  if (endpoint.rfind(kStdio, 0) == 0) {
    return std::make_unique<StdioAdapterClient>(endpoint.substr(kStdio.size()), timeout);
  }
  if (endpoint.rfind("http://", 0) == 0 || endpoint.rfind("https://", 0) == 0) {
    return net::make_http_adapter_client(endpoint, timeout);
  }
  throw Error(Errc::kConfig, "adapter endpoint must start with http://, https:// or stdio: ('" +
                                 endpoint + "')");
}

AdapterScoreResponse adapter_score(AdapterClient& client, const AdapterScoreRequest& req) {
  auto resp = client.score(req);
  if (resp.request_id != req.request_id) {
    throw Error(Errc::kAdapterProtocolError,
                "reply id '" + resp.request_id + "' does not echo '" + req.request_id + "'");
  }
  return resp;
}

AdapterScoreResponse AdapterPool::score(const std::string& endpoint, const AdapterScoreRequest& req) {
  std::shared_ptr<Slot> slot;
  {
    std::lock_guard lock(mutex_);
    auto& s = slots_[endpoint];
    if (!s) s = std::make_shared<Slot>();
    slot = s;
  }
  std::lock_guard lock(slot->mutex);
  if (!slot->client) slot->client = make_adapter_client(endpoint, timeout_);
  return adapter_score(*slot->client, req);
}

}  // namespace iqagent
