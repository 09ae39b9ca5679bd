#include <atomic>
#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "helmsman/error.hpp"
#include "helmsman/http_backend.hpp"
#include "helmsman/mock_backend.hpp"
#include "support.hpp"

namespace helmsman {
namespace {

std::vector<ChatMessage> user(const std::string& text, std::vector<std::string> frames = {}) {
  return {ChatMessage{MessageRole::kUser, text, std::move(frames)}};
}

// Records every request and answers from a queue of canned results.
class CaptureTransport final : public HttpTransport {
 public:
  struct Shared {
    std::vector<std::string> paths;
    std::vector<nlohmann::json> bodies;
    std::vector<HttpHeaders> headers;
    std::vector<HttpResult> replies;  // served in order, last repeats
  };

  explicit CaptureTransport(std::shared_ptr<Shared> s) : s_(std::move(s)) {}

  HttpResult post(const std::string& path, const std::string& body, const HttpHeaders& headers,
                  double) override {
    const std::size_t i = s_->paths.size();
    s_->paths.push_back(path);
    s_->bodies.push_back(nlohmann::json::parse(body));
    s_->headers.push_back(headers);
    return s_->replies.at(std::min(i, s_->replies.size() - 1));
  }

 private:
  std::shared_ptr<Shared> s_;
};

HttpResult ok(const nlohmann::json& body) { return {true, 200, body.dump(), ""}; }

nlohmann::json completion(const std::string& text) {
  return {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
          {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 3}}}};
}

BackendProfile profile(Role role, int retries = 0) {
  BackendProfile p;
  p.role = role;
  p.endpoint = "http://127.0.0.1:1";
  p.model_id = "m";
  p.max_retries = retries;
  p.backoff_initial_s = 0.0;
  return p;
}

std::vector<std::string> fixture_frames(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.png", i);
    out.push_back((testing::eval_fixture_dir() / "clips" / "c-river-01" / name).string());
  }
  return out;
}

TEST(MockBackend, ContainsRuleAnswers) {
  auto reg = testing::registry({{"rules", {{{"contains", "hello"}, {"response", "world"}}}}});
  auto set = make_mock_backends(reg);
  EXPECT_EQ(set.at(Role::kReasoner).chat(user("say hello")).response_text, "world");
  EXPECT_EQ(reg->calls(Role::kReasoner), 1u);
  EXPECT_THROW(set.at(Role::kReasoner).chat(user("nothing matches")), Error);
}

TEST(MockBackend, ResponsesAdvanceThenRepeat) {
  auto reg = testing::registry({{"rules", {{{"role", "grader"}, {"responses", {"a", "b"}}}}}});
  auto set = make_mock_backends(reg);
  Backend& g = set.at(Role::kGrader);
  EXPECT_EQ(g.chat(user("x")).response_text, "a");
  EXPECT_EQ(g.chat(user("x")).response_text, "b");
  EXPECT_EQ(g.chat(user("x")).response_text, "b");
}

TEST(MockBackend, EmbeddingsAreNormalizedAndDeterministic) {
  auto reg = testing::registry({{"rules",
                                 {{{"role", "embedder"}, {"contains", "raw"}, {"vector", {3.0, 4.0}}},
                                  {{"role", "embedder"}, {"contains", "a"}, {"vector", {1.0, 0.0}}},
                                  {{"role", "embedder"}, {"contains", "b"}, {"vector", {0.0, 1.0}}}}}});
  auto set = make_mock_backends(reg);
  Backend& e = set.at(Role::kEmbedder);
  auto ab = e.embed({"a", "b"});
  EXPECT_EQ(ab[0].values, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(ab[1].values, (std::vector<double>{0.0, 1.0}));
  auto aa = e.embed({"a", "a"});
  EXPECT_EQ(aa[0].values, aa[1].values);
  auto raw = e.embed({"raw"});
  EXPECT_NEAR(raw[0].values[0], 0.6, 1e-15);
  EXPECT_NEAR(raw[0].values[1], 0.8, 1e-15);
  EXPECT_THROW(e.embed({"  "}), Error);
  EXPECT_THROW(e.embed({}), Error);
}

TEST(MockBackend, ScriptedErrorsCarryRole) {
  auto reg = testing::registry({{"rules", {{{"role", "captioner"}, {"error", "transport"}}}}});
  auto set = make_mock_backends(reg);
  try {
    set.at(Role::kCaptioner).chat(user("x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTransport);
    EXPECT_EQ(e.role(), "captioner");
  }
}

TEST(MockBackend, HashedEmbeddingFollowsWordOverlap) {
  const auto a = EmbeddingVector::normalized(hashed_embedding("green buoy starboard", 256));
  const auto b = EmbeddingVector::normalized(hashed_embedding("starboard green buoy", 256));
  const auto c = EmbeddingVector::normalized(hashed_embedding("sound signal", 256));
  EXPECT_NEAR(dot(a, b), 1.0, 1e-12);
  EXPECT_LT(dot(a, c), dot(a, b));
  EXPECT_EQ(hashed_embedding("", 4), (std::vector<double>{1, 0, 0, 0}));
}

TEST(MockScript, RejectsBadRules) {
  EXPECT_THROW(MockScript::from_json({{"rules", {{{"role", "pilot"}, {"response", "x"}}}}}), Error);
  EXPECT_THROW(MockScript::from_json({{"rules", {{{"role", "router"}}}}}), Error);
  EXPECT_THROW(MockScript::from_json({{"hashed_embedding_dim", 0}}), Error);
}

TEST(HttpBackend, ChatRequestCarriesOneImagePartPerFrame) {
  auto shared = std::make_shared<CaptureTransport::Shared>();
  shared->replies = {ok(completion("a cargo vessel approaches head-on"))};
  HttpBackend b(profile(Role::kCaptioner), std::make_unique<CaptureTransport>(shared));
  const auto ex = b.chat(user("describe", fixture_frames(4)));
  EXPECT_EQ(ex.response_text, "a cargo vessel approaches head-on");
  ASSERT_TRUE(ex.usage.has_value());
  EXPECT_EQ(ex.usage->prompt_tokens, 12);

  ASSERT_EQ(shared->bodies.size(), 1u);
  EXPECT_EQ(shared->paths[0], "/v1/chat/completions");
  const auto& content = shared->bodies[0]["messages"][0]["content"];
  int images = 0;
  int texts = 0;
  for (const auto& part : content) {
    if (part["type"] == "image_url") {
      ++images;
      EXPECT_EQ(part["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0), 0u);
    }
    if (part["type"] == "text") ++texts;
  }
  EXPECT_EQ(images, 4);
  EXPECT_EQ(texts, 1);
}

TEST(HttpBackend, RetriesServerErrorsThenSucceeds) {
  auto shared = std::make_shared<CaptureTransport::Shared>();
  shared->replies = {{true, 503, "busy", ""}, {false, 0, "", "connection refused"}, ok(completion("ok"))};
  HttpBackend b(profile(Role::kReasoner, 2), std::make_unique<CaptureTransport>(shared));
  EXPECT_EQ(b.chat(user("q")).response_text, "ok");
  EXPECT_EQ(shared->bodies.size(), 3u);
}

TEST(HttpBackend, ClientErrorIsNotRetried) {
  auto shared = std::make_shared<CaptureTransport::Shared>();
  shared->replies = {{true, 400, "bad", ""}};
  HttpBackend b(profile(Role::kReasoner, 3), std::make_unique<CaptureTransport>(shared));
  try {
    b.chat(user("q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBackendFailure);
    EXPECT_EQ(e.status(), 400);
    EXPECT_EQ(e.role(), "reasoner");
  }
  EXPECT_EQ(shared->bodies.size(), 1u);
}

TEST(HttpBackend, TransportFailureAfterRetryBudget) {
  auto shared = std::make_shared<CaptureTransport::Shared>();
  shared->replies = {{false, 0, "", "timeout"}};
  HttpBackend b(profile(Role::kRouter, 2), std::make_unique<CaptureTransport>(shared));
  try {
    b.chat(user("q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTransport);
  }
  EXPECT_EQ(shared->bodies.size(), 3u);
}

TEST(HttpBackend, MalformedBodiesAreProtocolErrors) {
  auto shared = std::make_shared<CaptureTransport::Shared>();
  shared->replies = {ok({{"choices", nlohmann::json::array()}})};
  HttpBackend b(profile(Role::kReasoner), std::make_unique<CaptureTransport>(shared));
  try {
    b.chat(user("q"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocol);
  }
}

TEST(HttpBackend, EmbeddingsReorderByIndex) {
  auto shared = std::make_shared<CaptureTransport::Shared>();
  shared->replies = {ok({{"data",
                          {{{"index", 1}, {"embedding", {0.0, 2.0}}}, {{"index", 0}, {"embedding", {3.0, 4.0}}}}}})};
  HttpBackend b(profile(Role::kEmbedder), std::make_unique<CaptureTransport>(shared));
  const auto v = b.embed({"first", "second"});
  EXPECT_EQ(shared->paths[0], "/v1/embeddings");
  EXPECT_EQ(shared->bodies[0]["input"], (nlohmann::json{"first", "second"}));
  EXPECT_NEAR(v[0].values[0], 0.6, 1e-15);
  EXPECT_NEAR(v[1].values[1], 1.0, 1e-15);
}

TEST(HttpBackend, TimesOutAgainstStalledServer) {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(completion("late").dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  BackendProfile p = profile(Role::kReasoner, 1);
  p.endpoint = "http://127.0.0.1:" + std::to_string(port);
  p.timeout_s = 0.1;
  HttpBackend b(p);
  try {
    b.chat(user("q"));
    ADD_FAILURE() << "expected a transport error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTransport);
  }
  server.stop();
  t.join();
  EXPECT_EQ(hits.load(), 2);
}

TEST(HttpBackend, TalksToRealServer) {
  httplib::Server server;
  server.Post("/base/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    res.set_content(completion("echo:" + body["messages"][0]["content"].get<std::string>()).dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  BackendProfile p = profile(Role::kReasoner);
  p.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/base/";
  HttpBackend b(p);
  EXPECT_EQ(b.chat(user("hi")).response_text, "echo:hi");
  server.stop();
  t.join();
}

TEST(Backend, MaxParallelCapsInFlightRequests) {
  auto reg = testing::registry({{"rules", {{{"response", "x"}, {"sleep_ms", 30}}}}});
  BackendProfile p;
  p.max_parallel = 2;
  auto set = make_mock_backends(reg, {{Role::kReasoner, p}});
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] { set.at(Role::kReasoner).chat(user("q")); });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(reg->calls(Role::kReasoner), 8u);
  EXPECT_LE(reg->max_in_flight(), 2);
  EXPECT_GE(reg->max_in_flight(), 1);
}

TEST(Backend, ChatNeedsUserMessage) {
  auto reg = testing::registry({{"default_response", "x"}});
  auto set = make_mock_backends(reg);
  EXPECT_THROW(set.at(Role::kReasoner).chat({ChatMessage{MessageRole::kSystem, "s", {}}}), Error);
}

TEST(BackendProfile, ValidateRejectsBadValues) {
  BackendProfile p;
  p.timeout_s = 0;
  EXPECT_THROW(p.validate(), Error);
  p = BackendProfile{};
  p.max_parallel = 0;
  EXPECT_THROW(p.validate(), Error);
  p = BackendProfile{};
  p.max_retries = -1;
  EXPECT_THROW(p.validate(), Error);
}

TEST(BackendSet, UnconfiguredRoleIsInvalidState) {
  BackendSet set;
  EXPECT_FALSE(set.has(Role::kJudge));
  try {
    set.at(Role::kJudge);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidState);
  }
}

}  // namespace
}  // namespace helmsman
