// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "medorder/concurrency.hpp"
#include "medorder/corpus.hpp"
#include "medorder/errors.hpp"
#include "medorder/llm_client.hpp"
#include "medorder/parser.hpp"
#include "support.hpp"

using namespace medorder;
using namespace std::chrono_literals;
using testsupport::TempDir;

namespace {

// Local chat-completions stub. `reply` decides status and body per request.
class StubServer {
 public:
  using Reply = std::function<void(int request_no, const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Reply reply) : reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      int n;
      {
        std::lock_guard lock(mutex_);
        bodies_.push_back(req.body);
        auth_.push_back(req.get_header_value("Authorization"));
        n = static_cast<int>(bodies_.size());
      }
      reply_(n, req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  std::size_t requests() {
    std::lock_guard lock(mutex_);
    return bodies_.size();
  }
  std::string body(std::size_t i) {
    std::lock_guard lock(mutex_);
    return bodies_.at(i);
  }
  std::string auth(std::size_t i) {
    std::lock_guard lock(mutex_);
    return auth_.at(i);
  }

 private:
  Reply reply_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mutex_;
  std::vector<std::string> bodies_;
  std::vector<std::string> auth_;
};

std::string chat_reply(const std::string& content) {
  nlohmann::json j;
  j["choices"] = {{{"message", {{"role", "assistant"}, {"content", content}}}}};
  j["usage"] = {{"prompt_tokens", 120}, {"completion_tokens", 7}};
  return j.dump();
}

Backend endpoint_backend(const std::string& url) {
  Backend b;
  b.kind = BackendKind::Endpoint;
  b.endpoint_url = url;
  b.model_name = "test-model";
  b.api_key_env = "MEDORDER_TEST_KEY";
  b.timeout = 5s;
  return b;
}

PromptBundle sample_bundle() {
  PromptBundle b;
  b.encounter_id = "enc-3";
  b.system = "system text";
  b.exchanges = {{"example query", "lab, cbc, null, [1]"}};
  b.query = "the query";
  return b;
}

struct SleepLog {
  std::vector<std::chrono::milliseconds> calls;
  EndpointClient::Sleeper sleeper() {
    return [this](std::chrono::milliseconds d) { calls.push_back(d); };
  }
};

}  // namespace

TEST_CASE("decode parameter defaults and validation") {
  DecodeParams p;
  CHECK(p.temperature == 0.2);
  CHECK(p.top_p == 0.9);
  CHECK(p.max_new_tokens == 1024);
  CHECK(p.max_context_tokens == 8192);
  CHECK_NOTHROW(p.validate());
  p.top_p = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = DecodeParams{};
  p.temperature = -1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("backend validation") {
  Backend b;
  b.kind = BackendKind::Endpoint;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
  b.endpoint_url = "http://x";
  b.model_name = "m";
  CHECK_NOTHROW(b.validate());
  b.kind = BackendKind::Replay;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
  CHECK(parse_backend_kind("MOCK") == BackendKind::Mock);
  CHECK_FALSE(parse_backend_kind("grpc").has_value());
}

TEST_CASE("mock answers with the rendered gold orders") {
  const auto corpus = load_corpus(testsupport::data("mini_gold.json"), CorpusRole::WithGold);
  MockClient mock(corpus);
  PromptBundle b;
  b.encounter_id = "mini-d";
  const PromptBundle before = b;
  const Completion c = mock.complete(b, DecodeParams{});
  CHECK(b == before);
  CHECK(c.text == "lab, cbc, null, [5]\nimaging, mri of the spine, back pain, [5, 6]");
  const ParseOutcome parsed = parse_output(c.text, corpus[3]);
  CHECK(parsed.orders == *corpus[3].gold_orders);
  CHECK(parsed.discarded_lines.empty());

  b.encounter_id = "unknown";
  CHECK(mock.complete(b, DecodeParams{}).text == kMockCannedResponse);
  CHECK(mock.complete(b, DecodeParams{}).text == mock.complete(b, DecodeParams{}).text);
}

TEST_CASE("replay store round trip") {
  TempDir dir("replay");
  const auto store = dir / "store.jsonl";
  const std::string response = "lab, cbc, null, [10]\n\"quoted\" \\ back\tslash ünï";
  CHECK_FALSE(record_replay("enc-3", response, store));
  CHECK(load_replay_store(store).at("enc-3") == response);

  ReplayClient replay(store);
  PromptBundle b = sample_bundle();
  CHECK(replay.complete(b, DecodeParams{}).text == response);
  b.encounter_id = "enc-4";
  CHECK_THROWS_AS(replay.complete(b, DecodeParams{}), LookupError);
}

TEST_CASE("duplicate replay id: last write wins with a warning") {
  TempDir dir("replay-dup");
  const auto store = dir / "store.jsonl";
  record_replay("a", "first", store);
  std::ostringstream captured;
  auto* old = std::cerr.rdbuf(captured.rdbuf());
  const bool replaced = record_replay("a", "second", store);
  std::cerr.rdbuf(old);
  CHECK(replaced);
  CHECK(captured.str().find("warning") != std::string::npos);
  CHECK(load_replay_store(store).at("a") == "second");
}

TEST_CASE("concurrent replay writers keep every record") {
  TempDir dir("replay-mt");
  const auto store = dir / "store.jsonl";
  constexpr std::size_t kWriters = 64;
  run_bounded(kWriters, 8, [&](std::size_t i) {
    return record_replay("enc-" + std::to_string(i), std::string(500 + i, 'x'), store);
  });
  const auto loaded = load_replay_store(store);
  CHECK(loaded.size() == kWriters);
  for (std::size_t i = 0; i < kWriters; ++i) CHECK(loaded.at("enc-" + std::to_string(i)).size() == 500 + i);
}

TEST_CASE("malformed replay store") {
  TempDir dir("replay-bad");
  testsupport::spit(dir / "s.jsonl", "{\"id\": \"a\", \"response\": \"x\"}\nnot json\n");
  CHECK_THROWS_AS(load_replay_store(dir / "s.jsonl"), PersistenceError);
  CHECK_THROWS_AS(load_replay_store(dir / "missing.jsonl"), PersistenceError);
}

TEST_CASE("request body maps the bundle onto chat messages") {
  DecodeParams p;
  p.seed = 7;
  const auto body = chat_request_body(sample_bundle(), p, "m");
  CHECK(body["model"] == "m");
  REQUIRE(body["messages"].size() == 4);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"] == "example query");
  CHECK(body["messages"][2]["role"] == "assistant");
  CHECK(body["messages"][3]["content"] == "the query");
  CHECK(body["temperature"] == 0.2);
  CHECK(body["top_p"] == 0.9);
  CHECK(body["max_tokens"] == 1024);
  CHECK(body["seed"] == 7);
  CHECK_FALSE(chat_request_body(sample_bundle(), DecodeParams{}, "m").contains("seed"));
}

TEST_CASE("endpoint success") {
  StubServer server([](int, const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_reply("lab, cbc, null, [1]"), "application/json");
  });
  ::setenv("MEDORDER_TEST_KEY", "secret", 1);
  EndpointClient client(endpoint_backend(server.url()));
  const Completion c = client.complete(sample_bundle(), DecodeParams{});
  ::unsetenv("MEDORDER_TEST_KEY");
  CHECK(c.text == "lab, cbc, null, [1]");
  CHECK(c.attempts == 1);
  CHECK(c.prompt_tokens == 120);
  CHECK(c.completion_tokens == 7);
  REQUIRE(server.requests() == 1);
  CHECK(server.auth(0) == "Bearer secret");
  CHECK(nlohmann::json::parse(server.body(0))["model"] == "test-model");
}

TEST_CASE("429 three times exhausts the retries with doubling backoff") {
  StubServer server([](int, const httplib::Request&, httplib::Response& res) {
    res.status = 429;
    res.set_content("slow down", "text/plain");
  });
  SleepLog log;
  EndpointClient client(endpoint_backend(server.url()), log.sleeper());
  try {
    client.complete(sample_bundle(), DecodeParams{});
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.attempts == 3);
    CHECK(e.last_status == 429);
  }
  CHECK(server.requests() == 3);
  CHECK(log.calls == std::vector<std::chrono::milliseconds>{1000ms, 2000ms});
}

TEST_CASE("a retry that succeeds") {
  StubServer server([](int n, const httplib::Request&, httplib::Response& res) {
    if (n == 1) {
      res.status = 503;
      return;
    }
    res.set_content(chat_reply("ok"), "application/json");
  });
  SleepLog log;
  EndpointClient client(endpoint_backend(server.url()), log.sleeper());
  const Completion c = client.complete(sample_bundle(), DecodeParams{});
  CHECK(c.text == "ok");
  CHECK(c.attempts == 2);
  CHECK(log.calls.size() == 1);
}

TEST_CASE("client errors are not retried") {
  StubServer server([](int, const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content("bad request", "text/plain");
  });
  SleepLog log;
  EndpointClient client(endpoint_backend(server.url()), log.sleeper());
  try {
    client.complete(sample_bundle(), DecodeParams{});
    FAIL("expected an endpoint error");
  } catch (const EndpointError& e) {
    CHECK(e.status == 400);
  }
  CHECK(server.requests() == 1);
  CHECK(log.calls.empty());
}

TEST_CASE("well-formed but unusable body is not retried") {
  StubServer server([](int, const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  EndpointClient client(endpoint_backend(server.url()), SleepLog{}.sleeper());
  CHECK_THROWS_AS(client.complete(sample_bundle(), DecodeParams{}), EndpointError);
  CHECK(server.requests() == 1);
}

TEST_CASE("unreachable endpoint is a transport error") {
  const int port = testsupport::closed_port();
  Backend b = endpoint_backend("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions");
  b.max_attempts = 2;
  SleepLog log;
  EndpointClient client(b, log.sleeper());
  try {
    client.complete(sample_bundle(), DecodeParams{});
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.attempts == 2);
    CHECK(e.last_status == 0);
  }
  CHECK(log.calls == std::vector<std::chrono::milliseconds>{1000ms});
}

TEST_CASE("run_bounded returns results by index") {
  const auto out = run_bounded(100, 7, [](std::size_t i) {
    std::this_thread::sleep_for(std::chrono::microseconds((100 - i) * 10));
    return static_cast<int>(i * i);
  });
  REQUIRE(out.size() == 100);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i * i));
  CHECK_THROWS_AS(run_bounded(10, 3, [](std::size_t i) -> int {
                    if (i == 4) throw std::runtime_error("boom");
                    return 0;
                  }),
                  std::runtime_error);
}
