#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "test_util.hpp"
#include "topicllm/backends.hpp"

namespace topicllm {
namespace {

/// Local OpenAI-compatible server running on an ephemeral port.
class MockServer {
 public:
  MockServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  httplib::Server& server() { return server_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RemoteConfig fast_config(const std::string& url, int retries = 3) {
  RemoteConfig c;
  c.base_url = url;
  c.model = "test-model";
  c.api_key_env = "TOPICLLM_TEST_KEY";
  c.retry.max_retries = retries;
  c.retry.initial_backoff = std::chrono::milliseconds(1);
  c.retry.max_backoff = std::chrono::milliseconds(4);
  c.timeout_seconds = 5;
  return c;
}

std::string chat_body(const std::string& text) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})}}.dump();
}

TEST(RemoteChat, ReturnsFirstChoiceAndSendsWireFormat) {
  MockServer mock;
  json seen;
  std::string auth;
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(chat_body("Baseball, Hockey"), "application/json");
  });
  ::setenv("TOPICLLM_TEST_KEY", "sk-test", 1);
  RemoteChatBackend backend(fast_config(mock.url()));
  GenerationParams p;
  p.max_tokens = 32;
  auto res = backend.complete_detailed("Document ... Topic:", p);
  ::unsetenv("TOPICLLM_TEST_KEY");

  EXPECT_EQ(res.text, "Baseball, Hockey");
  EXPECT_EQ(res.retries, 0);
  EXPECT_EQ(seen["model"], "test-model");
  EXPECT_EQ(seen["messages"][0]["role"], "user");
  EXPECT_EQ(seen["messages"][0]["content"], "Document ... Topic:");
  EXPECT_EQ(seen["temperature"], 0.0);
  EXPECT_EQ(seen["max_tokens"], 32);
  EXPECT_EQ(auth, "Bearer sk-test");
}

TEST(RemoteChat, RetriesAfter429) {
  MockServer mock;
  std::atomic<int> calls{0};
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 429;
      return;
    }
    res.set_content(chat_body("ok"), "application/json");
  });
  RemoteChatBackend backend(fast_config(mock.url()));
  auto res = backend.complete_detailed("p", {});
  EXPECT_EQ(res.text, "ok");
  EXPECT_EQ(res.retries, 1);
  EXPECT_EQ(backend.total_retries(), 1);
  EXPECT_EQ(calls.load(), 2);
}

TEST(RemoteChat, GivesUpAfterRetryCapWithLastStatus) {
  MockServer mock;
  std::atomic<int> calls{0};
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = calls.load() < 5 ? 500 : 503;
  });
  RemoteChatBackend backend(fast_config(mock.url(), 3));
  try {
    backend.complete("p", {});
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_EQ(e.status(), 500);
    EXPECT_FALSE(e.fatal());
  }
  EXPECT_EQ(calls.load(), 4);  // first attempt plus three retries
}

TEST(RemoteChat, AuthFailureIsFatalWithoutRetry) {
  MockServer mock;
  std::atomic<int> calls{0};
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  RemoteChatBackend backend(fast_config(mock.url()));
  try {
    backend.complete("p", {});
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_TRUE(e.fatal());
    EXPECT_EQ(e.status(), 401);
  }
  EXPECT_EQ(calls.load(), 1);
}

TEST(RemoteChat, MalformedBody) {
  MockServer mock;
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  RemoteChatBackend backend(fast_config(mock.url()));
  EXPECT_THROW(backend.complete("p", {}), BackendError);
}

TEST(RemoteChat, UnreachableEndpointIsFatal) {
  // Nothing listens on port 1, so every connection attempt is refused.
  RemoteChatBackend backend(fast_config("http://127.0.0.1:1", 1));
  try {
    backend.complete("p", {});
    FAIL();
  } catch (const BackendError& e) {
    EXPECT_TRUE(e.fatal());
    EXPECT_EQ(e.status(), 0);
  }
}

TEST(RemoteChat, HonoursBasePathPrefix) {
  MockServer mock;
  mock.server().Post("/proxy/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_body("prefixed"), "application/json");
  });
  RemoteChatBackend backend(fast_config(mock.url() + "/proxy/"));
  EXPECT_EQ(backend.complete("p", {}), "prefixed");
}

TEST(RemoteChat, LimitsRequestsInFlight) {
  MockServer mock;
  std::atomic<int> active{0}, peak{0};
  mock.server().new_task_queue = [] { return new httplib::ThreadPool(8); };
  mock.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --active;
    res.set_content(chat_body("x"), "application/json");
  });
  auto cfg = fast_config(mock.url());
  cfg.max_in_flight = 2;
  RemoteChatBackend backend(cfg);
  std::vector<std::jthread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { backend.complete("p", {}); });
  threads.clear();
  EXPECT_LE(peak.load(), 2);
  EXPECT_GE(peak.load(), 1);
}

TEST(RemoteEmbed, ParsesVectorsAndCachesOnDisk) {
  MockServer mock;
  std::atomic<int> requests{0};
  mock.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    ++requests;
    auto body = json::parse(req.body);
    json data = json::array();
    // Reply in reverse order with explicit indices.
    for (std::size_t i = body["input"].size(); i-- > 0;) {
      const auto text = body["input"][i].get<std::string>();
      data.push_back({{"index", i}, {"embedding", {static_cast<double>(text.size()), 1.0, 0.0}}});
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  testutil::TempDir dir;
  auto cache = std::make_shared<EmbeddingCache>(dir / "cache.jsonl");
  RemoteEmbedBackend backend(fast_config(mock.url()), 3, cache);
  auto out = backend.embed({"ab", "abcd"});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].values, (std::vector<double>{2, 1, 0}));
  EXPECT_EQ(out[1].values, (std::vector<double>{4, 1, 0}));
  EXPECT_EQ(requests.load(), 1);

  backend.embed({"abcd", "ab"});
  EXPECT_EQ(requests.load(), 1);

  EmbeddingCache reloaded(dir / "cache.jsonl");
  EXPECT_EQ(reloaded.size(), 2u);
  EXPECT_EQ(reloaded.get(mock.url(), "test-model", "ab")->values, (std::vector<double>{2, 1, 0}));
  EXPECT_FALSE(reloaded.get(mock.url(), "other-model", "ab").has_value());
}

TEST(RemoteEmbed, RejectsWrongDimension) {
  MockServer mock;
  mock.server().Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"embedding":[1.0,2.0]}]})", "application/json");
  });
  RemoteEmbedBackend backend(fast_config(mock.url()), 384);
  EXPECT_THROW(backend.embed({"x"}), BackendError);
}

}  // namespace
}  // namespace topicllm
