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


#include <gtest/gtest.h>
#include <httplib.h>

#include <cmath>
#include <thread>

#include "iqagent/error.hpp"
#include "iqagent/gateway.hpp"
#include "test_support.hpp"

using namespace iqagent;
using namespace iqagent::testing;

namespace {

ChatRequest sample_request(const std::string& user = "User's query: hello") {
  ChatRequest r;
  r.messages.push_back({Role::kSystem, "system text", {}});
  r.messages.push_back({Role::kUser, user, {ImageHandle::from_raster(make_scene(16, 16, 3))}});
  return r;
}

// Backend returning a fixed reply and optional logprobs.
class FixedBackend final : public ChatBackend {
 public:
  std::string reply = "C";
  std::optional<std::map<std::string, double>> logprobs;
  ChatResponse chat(const ChatRequest& req) override {
    ChatResponse r;
    r.text = reply;
    if (req.want_logprobs_for) r.logprobs = logprobs;
    return r;
  }
  std::string id() const override { return "fixed"; }
};

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kIo;
}

struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;
  LocalServer() = default;
  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

}  // namespace

TEST(Request, Invariants) {
  ChatRequest r;
  EXPECT_EQ(code_of([&] { check_request(r); }), Errc::kSchemaViolation);
  r = sample_request();
  EXPECT_NO_THROW(check_request(r));
  r.messages[0].images.push_back(ImageHandle::from_raster(make_scene(8, 8, 1)));
  EXPECT_EQ(code_of([&] { check_request(r); }), Errc::kSchemaViolation);
  r = sample_request();
  r.decoding.max_tokens = 0;
  EXPECT_EQ(code_of([&] { check_request(r); }), Errc::kSchemaViolation);
}

TEST(Digest, StableAndSensitive) {
  const auto a = sample_request();
  EXPECT_EQ(request_digest(a), request_digest(sample_request()));
  auto crlf = sample_request("User's query:\r\nhello");
  EXPECT_EQ(request_digest(crlf), request_digest(sample_request("User's query:\nhello")));
  auto other_image = sample_request();
  other_image.messages[1].images[0] = ImageHandle::from_raster(make_scene(16, 16, 4));
  EXPECT_NE(request_digest(a), request_digest(other_image));
  auto temp = sample_request();
  temp.decoding.temperature = 0.5;
  EXPECT_NE(request_digest(a), request_digest(temp));
  auto lp = sample_request();
  lp.want_logprobs_for = std::vector<std::string>{"A"};
  EXPECT_NE(request_digest(a), request_digest(lp));
}

TEST(Digest, CanonicalFormHasSortedKeysAndImageHashes) {
  const auto c = canonical_request(sample_request());
  const auto& img = c["messages"][1]["images"][0];
  ASSERT_TRUE(img.is_string());
  EXPECT_EQ(img.get<std::string>().size(), 64u);
  // nlohmann's object type keeps keys sorted, so the dump is order independent.
  EXPECT_EQ(json::parse(c.dump()).dump(), c.dump());
}

TEST(Replay, RecordThenReplay) {
  TempDir dir;
  const auto path = (dir / "c.json").string();
  auto inner = std::make_shared<FixedBackend>();
  inner->reply = "{\"plan\":1}";
  inner->logprobs = std::map<std::string, double>{{"A", -0.1}};
  {
    auto store = CassetteStore::open(path, false);
    RecordingBackend rec(inner, store);
    auto req = sample_request();
    req.want_logprobs_for = std::vector<std::string>{"A"};
    rec.chat(req);
    rec.chat(sample_request("second"));
  }
  auto store = CassetteStore::open(path, true);
  EXPECT_EQ(store->size(), 2u);
  ReplayBackend replay(store, true);
  auto req = sample_request();
  req.want_logprobs_for = std::vector<std::string>{"A"};
  const auto r1 = replay.chat(req);
  const auto r2 = replay.chat(req);
  EXPECT_EQ(r1.text, "{\"plan\":1}");
  EXPECT_EQ(r1.text, r2.text);
  ASSERT_TRUE(r1.logprobs);
  EXPECT_DOUBLE_EQ(r1.logprobs->at("A"), -0.1);
  EXPECT_EQ(replay.chat(sample_request("second")).text, "{\"plan\":1}");
}

TEST(Replay, MissIsFatalOnlyWhenStrict) {
  auto store = std::make_shared<CassetteStore>();
  Gateway strict(std::make_shared<ReplayBackend>(store, true));
  Gateway lax(std::make_shared<ReplayBackend>(store, false));
  try {
    strict.chat(sample_request());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kReplayMiss);
    EXPECT_TRUE(strict.is_fatal(e));
    EXPECT_FALSE(lax.is_fatal(e));
  }
}

TEST(Replay, OpenMissingCassette) {
  TempDir dir;
  EXPECT_THROW(CassetteStore::open((dir / "none.json").string(), true), Error);
  EXPECT_EQ(CassetteStore::open((dir / "none.json").string(), false)->size(), 0u);
}

TEST(LevelLogprobs, PassThroughByLabelOrLetter) {
  auto backend = std::make_shared<FixedBackend>();
  backend->logprobs = std::map<std::string, double>{
      {"excellent", -0.2}, {"good", -1.8}, {"fair", -3.0}, {"poor", -4.5}, {"bad", -5.1}};
  Gateway gw(backend);
  const auto out = gw.level_logprobs(sample_request().messages);
  EXPECT_FALSE(out.from_fallback);
  EXPECT_EQ(out.by_level, (std::map<int, double>{{5, -0.2}, {4, -1.8}, {3, -3.0}, {2, -4.5}, {1, -5.1}}));
  backend->logprobs = std::map<std::string, double>{{"A", -0.2}, {"B", -1.8}, {"C", -3.0}, {"D", -4.5}, {"E", -5.1}};
  EXPECT_EQ(gw.level_logprobs(sample_request().messages).by_level.at(5), -0.2);
}

TEST(LevelLogprobs, MissingLevel) {
  auto backend = std::make_shared<FixedBackend>();
  backend->logprobs = std::map<std::string, double>{{"A", -0.2}, {"B", -1.8}};
  Gateway gw(backend);
  EXPECT_EQ(code_of([&] { gw.level_logprobs(sample_request().messages); }), Errc::kBackendUnsupported);
}

TEST(LevelLogprobs, SmoothedFallback) {
  auto backend = std::make_shared<FixedBackend>();
  backend->reply = "B. Good";
  Gateway gw(backend, {true, 0.01});
  const auto out = gw.level_logprobs(sample_request().messages);
  EXPECT_TRUE(out.from_fallback);
  EXPECT_NEAR(out.by_level.at(4), std::log(0.96), 1e-15);
  double total = 0.0;
  for (const auto& [c, lp] : out.by_level) {
    if (c != 4) EXPECT_DOUBLE_EQ(lp, std::log(0.01));
    total += std::exp(lp);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(LevelLogprobs, FallbackDisabledOrUnreadable) {
  auto backend = std::make_shared<FixedBackend>();
  Gateway off(backend, {false, 0.01});
  EXPECT_EQ(code_of([&] { off.level_logprobs(sample_request().messages); }), Errc::kBackendUnsupported);
  backend->reply = "I would rather not say";
  Gateway on(backend);
  EXPECT_EQ(code_of([&] { on.level_logprobs(sample_request().messages); }), Errc::kBackendUnsupported);
}

TEST(LevelLogprobs, SmoothedOneHotEpsilonRange) {
  EXPECT_THROW(smoothed_one_hot(QualityLevel(3), 0.0), Error);
  EXPECT_THROW(smoothed_one_hot(QualityLevel(3), 0.2), Error);
  const auto m = smoothed_one_hot(QualityLevel(1), 0.05);
  EXPECT_DOUBLE_EQ(m.at(1), std::log(0.8));
}

TEST(Remote, RequestBodyShape) {
  auto req = sample_request();
  req.want_logprobs_for = std::vector<std::string>{"A", "B"};
  const auto body = remote_request_body(req, {"http://x", "", "m1", 1000, 0, 5});
  EXPECT_EQ(body["model"], "m1");
  EXPECT_EQ(body["messages"][0]["content"], "system text");
  EXPECT_EQ(body["messages"][1]["content"][1]["type"], "image_url");
  EXPECT_EQ(body["messages"][1]["content"][1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0), 0u);
  EXPECT_EQ(body["top_logprobs"], 5);
  EXPECT_TRUE(body["logprobs"].get<bool>());
}

TEST(Remote, ParseTopLogprobs) {
  ChatRequest req = sample_request();
  req.want_logprobs_for = std::vector<std::string>{"A", "B", "C", "D", "E"};
  const json body = json::parse(R"({"choices":[{"message":{"content":"B"},"logprobs":{"content":[
      {"token":"B","logprob":-0.3,"top_logprobs":[{"token":"B","logprob":-0.3},{"token":" B","logprob":-2.0},
      {"token":"A","logprob":-1.5},{"token":"hello","logprob":-4.0}]}]}}]})");
  const auto r = parse_remote_response(body, req);
  EXPECT_EQ(r.text, "B");
  ASSERT_TRUE(r.logprobs);
  EXPECT_NEAR(r.logprobs->at("B"), std::log(std::exp(-0.3) + std::exp(-2.0)), 1e-12);
  EXPECT_DOUBLE_EQ(r.logprobs->at("A"), -1.5);
  EXPECT_FALSE(r.logprobs->contains("hello"));
  EXPECT_THROW(parse_remote_response(json::object(), req), Error);
}

TEST(Remote, RoundTripAgainstLocalServer) {
  LocalServer srv;
  std::string seen_auth;
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request& rq, httplib::Response& rs) {
    seen_auth = rq.get_header_value("Authorization");
    const auto body = json::parse(rq.body);
    rs.set_content(json{{"choices", {{{"message", {{"content", "echo " + body["model"].get<std::string>()}}}}}}}.dump(),
                   "application/json");
  });
  srv.start();
  auto backend = make_remote_backend({srv.url(), "k123", "tiny", 2000, 0, 20});
  const auto r = backend->chat(sample_request());
  EXPECT_EQ(r.text, "echo tiny");
  EXPECT_EQ(seen_auth, "Bearer k123");
}

TEST(Remote, RetriesServerErrorsThenFails) {
  LocalServer srv;
  int hits = 0;
  srv.server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& rs) {
    ++hits;
    rs.status = 503;
  });
  srv.server.Post("/bad/chat/completions", [&](const httplib::Request&, httplib::Response& rs) { rs.status = 400; });
  srv.start();
  auto backend = make_remote_backend({srv.url(), "", "m", 2000, 1, 20});
  EXPECT_EQ(code_of([&] { backend->chat(sample_request()); }), Errc::kHttpError);
  EXPECT_EQ(hits, 2);
  auto bad = make_remote_backend({"http://127.0.0.1:" + std::to_string(srv.port) + "/bad", "", "m", 2000, 3, 20});
  EXPECT_EQ(code_of([&] { bad->chat(sample_request()); }), Errc::kHttpError);
}

TEST(Remote, UnreachableHostTimesOut) {
  auto backend = make_remote_backend({"http://127.0.0.1:1", "", "m", 300, 0, 20});
  EXPECT_EQ(code_of([&] { backend->chat(sample_request()); }), Errc::kTimeout);
}

TEST(Gateway, CountsCalls) {
  auto backend = std::make_shared<FixedBackend>();
  Gateway gw(backend);
  gw.chat(sample_request());
  gw.chat(sample_request());
  EXPECT_EQ(gw.call_count(), 2u);
}
