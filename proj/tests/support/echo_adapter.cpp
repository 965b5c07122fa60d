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

// ECHO adapter stub: answers the adapter wire protocol without any model.
// The raw score comes from request metadata "score", then --scores, then
// --score. Misbehaviour modes exercise the client's failure paths.
//
//   echo_adapter [--tools A,B] [--score 3.3] [--scores LPIPS=0.12,QAlign=4.1]
//                [--mode ok|silent|garbage|wrong-id|bad-version|exit|slow]
//                [--delay-ms N] [--http PORT]
//
// stdio mode (default) reads one JSON message per line on stdin. With --http
// it serves GET /handshake and POST /score and prints "PORT <n>" once bound.

#include <httplib.h>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <thread>

using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "agentiqa-adapter/1";

struct Options {
  std::set<std::string> tools;  // empty serves every tool
  std::optional<double> score;
  std::map<std::string, double> scores;
  std::string mode = "ok";
  int delay_ms = 0;
  std::optional<int> http_port;
};

std::optional<std::string> b64decode(const std::string& in) {
  if (in.size() % 4 != 0) return std::nullopt;
  std::string out(in.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
  if (n < 0) return std::nullopt;
  size_t pad = 0;
  if (!in.empty() && in.back() == '=') ++pad;
  if (in.size() > 1 && in[in.size() - 2] == '=') ++pad;
  out.resize(static_cast<size_t>(n) - pad);
  return out;
}

bool looks_like_image(const std::string& bytes) {
  static const std::string png("\x89PNG\r\n\x1a\n", 8);
  if (bytes.compare(0, png.size(), png) == 0) return bytes.size() > png.size();
  if (bytes.size() > 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8) {
    return true;
  }
  return bytes.size() > 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6');
}

bool image_ok(const json& img) {
  if (!img.is_object() || !img.contains("data") || !img["data"].is_string()) return false;
  const auto bytes = b64decode(img["data"].get<std::string>());
  return bytes && looks_like_image(*bytes);
}

json handshake(const Options& o) {
  json tools = json::array();
  for (const auto& t : o.tools) tools.push_back(t);
  if (o.tools.empty()) tools.push_back("*");
  return {{"version", o.mode == "bad-version" ? "agentiqa-adapter/0" : kVersion}, {"tools", tools}};
}

json score(const Options& o, const json& req) {
  const auto id = req.value("request_id", "");
  auto error = [&](const std::string& message) {
    return json{{"request_id", id}, {"raw_score", nullptr}, {"status", "error"}, {"message", message}};
  };
  const auto tool = req.value("tool", "");
  if (!o.tools.empty() && !o.tools.contains(tool)) return error("unknown tool");
  if (!image_ok(req.value("distorted", json()))) return error("malformed image");
  if (req.contains("reference") && !req["reference"].is_null() && !image_ok(req["reference"])) {
    return error("malformed reference image");
  }
  std::optional<double> raw;
  if (req.contains("metadata") && req["metadata"].is_object() && req["metadata"].contains("score")) {
    raw = req["metadata"]["score"].get<double>();
  } else if (auto it = o.scores.find(tool); it != o.scores.end()) {
    raw = it->second;
  } else {
    raw = o.score;
  }
  if (!raw) return error("no score configured for " + tool);
  return {{"request_id", o.mode == "wrong-id" ? id + "-x" : id},
          {"raw_score", *raw},
          {"status", "ok"},
          {"message", ""}};
}

Options parse_args(int argc, char** argv) {
  Options o;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::cerr << "missing value for " << a << '\n';
        std::exit(64);
      }
      return argv[++i];
    };
    if (a == "--tools") {
      std::string list = next();
      size_t start = 0;
      while (start <= list.size()) {
        const auto end = std::min(list.find(',', start), list.size());
        if (end > start) o.tools.insert(list.substr(start, end - start));
        start = end + 1;
      }
    } else if (a == "--score") {
      o.score = std::stod(next());
    } else if (a == "--scores") {
      std::string list = next();
      size_t start = 0;
      while (start < list.size()) {
        const auto end = std::min(list.find(',', start), list.size());
        const auto item = list.substr(start, end - start);
        const auto eq = item.find('=');
        if (eq != std::string::npos) o.scores[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
        start = end + 1;
      }
    } else if (a == "--mode") {
      o.mode = next();
    } else if (a == "--delay-ms") {
      o.delay_ms = std::stoi(next());
    } else if (a == "--http") {
      o.http_port = std::stoi(next());
    } else {
      std::cerr << "unknown argument " << a << '\n';
      std::exit(64);
    }
  }
  return o;
}

int serve_stdio(const Options& o) {
  std::string line;
  while (std::getline(std::cin, line)) {
    const auto msg = json::parse(line, nullptr, false);
    if (msg.is_discarded()) {
      std::cout << R"({"status":"error","message":"unparseable message"})" << std::endl;
      continue;
    }
    const auto type = msg.value("type", "");
    if (type == "handshake") {
      std::cout << handshake(o).dump() << std::endl;
      continue;
    }
    if (o.mode == "exit") return 3;
    if (o.mode == "silent") continue;
    if (o.mode == "slow") std::this_thread::sleep_for(std::chrono::milliseconds(o.delay_ms));
    if (o.mode == "garbage") {
      std::cout << "this is not json" << std::endl;
      continue;
    }
    std::cout << (type == "score" ? score(o, msg) : json{{"status", "error"}, {"message", "unknown type"}}).dump()
              << std::endl;
  }
  return 0;
}

int serve_http(const Options& o) {
  httplib::Server server;
  server.Get("/handshake", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(handshake(o).dump(), "application/json");
  });
  server.Post("/score", [&](const httplib::Request& req, httplib::Response& res) {
    if (o.mode == "silent" || o.mode == "slow") {
      std::this_thread::sleep_for(std::chrono::milliseconds(o.mode == "slow" ? o.delay_ms : 60000));
    }
    if (o.mode == "garbage") {
      res.set_content("this is not json", "text/plain");
      return;
    }
    const auto msg = json::parse(req.body, nullptr, false);
    if (msg.is_discarded()) {
      res.status = 400;
      res.set_content(R"({"status":"error","message":"unparseable message"})", "application/json");
      return;
    }
    res.set_content(score(o, msg).dump(), "application/json");
  });
  int port = *o.http_port;
  if (port == 0) {
    port = server.bind_to_any_port("127.0.0.1");
  } else if (!server.bind_to_port("127.0.0.1", port)) {
    std::cerr << "cannot bind port " << port << '\n';
    return 1;
  }
  std::cout << "PORT " << port << std::endl;
  return server.listen_after_bind() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const auto o = parse_args(argc, argv);
  return o.http_port ? serve_http(o) : serve_stdio(o);
}
