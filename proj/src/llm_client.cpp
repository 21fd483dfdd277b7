// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "medorder/llm_client.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "medorder/errors.hpp"
#include "medorder/text.hpp"

namespace medorder {

using nlohmann::json;
using nlohmann::ordered_json;

void DecodeParams::validate() const {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  if (max_new_tokens <= 0) throw std::invalid_argument("max_new_tokens must be positive");
  if (max_context_tokens <= 0) throw std::invalid_argument("max_context_tokens must be positive");
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::Endpoint: return "endpoint";
    case BackendKind::Mock: return "mock";
    case BackendKind::Replay: return "replay";
  }
  return "";
}

std::optional<BackendKind> parse_backend_kind(std::string_view name) {
  for (BackendKind k : {BackendKind::Endpoint, BackendKind::Mock, BackendKind::Replay})
    if (text::iequals(name, to_string(k))) return k;
  return std::nullopt;
}

void Backend::validate() const {
  if (kind == BackendKind::Endpoint && (endpoint_url.empty() || model_name.empty()))
    throw std::invalid_argument("endpoint backend needs an endpoint url and a model name");
  if (kind == BackendKind::Replay && replay_path.empty())
    throw std::invalid_argument("replay backend needs a replay store path");
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

// ---------------------------------------------------------------------------
// Mock

MockClient::MockClient(std::span<const Encounter> corpus) {
  for (const Encounter& e : corpus) {
    if (e.gold_orders) responses_[e.id] = render_gold_orders(*e.gold_orders);
  }
}

Completion MockClient::complete(const PromptBundle& bundle, const DecodeParams&) {
  auto it = responses_.find(bundle.encounter_id);
  Completion c;
  c.text = it != responses_.end() ? it->second : std::string(kMockCannedResponse);
  return c;
}

// ---------------------------------------------------------------------------
// Replay store

namespace {
std::mutex& store_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

std::map<std::string, std::string> load_replay_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PersistenceError("cannot read replay store: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      json rec = json::parse(line);
      out[rec.at("id").get<std::string>()] = rec.at("response").get<std::string>();
    } catch (const json::exception& e) {
      throw PersistenceError(path.string() + ":" + std::to_string(line_no) +
                             ": bad replay record: " + e.what());
    }
  }
  return out;
}

bool record_replay(std::string_view id, std::string_view response, const std::filesystem::path& store) {
  std::lock_guard lock(store_mutex());

  bool replaced = false;
  if (std::filesystem::exists(store)) replaced = load_replay_store(store).contains(std::string(id));

  ordered_json rec;
  rec["id"] = id;
  rec["response"] = response;
  const std::string line = rec.dump() + "\n";

  // One write() on an O_APPEND descriptor keeps records whole across processes.
  int fd = ::open(store.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0)
    throw PersistenceError("cannot open replay store " + store.string() + ": " + std::strerror(errno));
  const ssize_t written = ::write(fd, line.data(), line.size());
  const int write_errno = errno;
  ::close(fd);
  if (written != static_cast<ssize_t>(line.size()))
    throw PersistenceError("short write to replay store " + store.string() + ": " +
                           std::strerror(write_errno));

  if (replaced)
    std::cerr << "warning: replay store " << store.string() << " already had a response for '" << id
              << "'; the new one wins\n";
  return replaced;
}

ReplayClient::ReplayClient(const std::filesystem::path& store) : responses_(load_replay_store(store)) {}

Completion ReplayClient::complete(const PromptBundle& bundle, const DecodeParams&) {
  auto it = responses_.find(bundle.encounter_id);
  if (it == responses_.end())
    throw LookupError("replay store has no response for encounter '" + bundle.encounter_id + "'");
  Completion c;
  c.text = it->second;
  return c;
}

// ---------------------------------------------------------------------------
// Endpoint

namespace {

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

ordered_json chat_request_body(const PromptBundle& bundle, const DecodeParams& params,
                               std::string_view model_name) {
  ordered_json messages = ordered_json::array();
  messages.push_back({{"role", "system"}, {"content", bundle.system}});
  for (const Exchange& ex : bundle.exchanges) {
    messages.push_back({{"role", "user"}, {"content", ex.user}});
    messages.push_back({{"role", "assistant"}, {"content", ex.assistant}});
  }
  messages.push_back({{"role", "user"}, {"content", bundle.query}});

  ordered_json body;
  body["model"] = model_name;
  body["messages"] = std::move(messages);
  body["temperature"] = params.temperature;
  body["top_p"] = params.top_p;
  body["max_tokens"] = params.max_new_tokens;
  if (params.seed) body["seed"] = *params.seed;
  return body;
}

EndpointClient::EndpointClient(Backend backend, Sleeper sleeper)
    : backend_(std::move(backend)), sleep_(std::move(sleeper)) {
  backend_.validate();
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  const std::string& url = backend_.endpoint_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw std::invalid_argument("endpoint url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  base_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "" : url.substr(path_start);
  if (path_.empty() || path_ == "/") path_ = "/v1/chat/completions";
}

Completion EndpointClient::complete(const PromptBundle& bundle, const DecodeParams& params) {
  const std::string body = chat_request_body(bundle, params, backend_.model_name).dump();
  httplib::Headers headers;
  if (const char* key = std::getenv(backend_.api_key_env.c_str()); key != nullptr && *key != '\0')
    headers.emplace("Authorization", std::string("Bearer ") + key);

  std::string last_problem;
  int last_status = 0;
  auto backoff = backend_.initial_backoff;
  const auto started = std::chrono::steady_clock::now();

  for (int attempt = 1; attempt <= backend_.max_attempts; ++attempt) {
    if (attempt > 1) {
      sleep_(backoff);
      backoff *= 2;
    }

    httplib::Client client(base_);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(backend_.timeout);
    client.set_write_timeout(std::chrono::seconds(30));
    auto res = client.Post(path_, headers, body, "application/json");

    if (!res) {
      last_status = 0;
      last_problem = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable_status(res->status)) {
      last_status = res->status;
      last_problem = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw EndpointError("endpoint returned HTTP " + std::to_string(res->status) + ": " +
                              res->body.substr(0, 200),
                          res->status);
    }

    Completion c;
    c.attempts = attempt;
    c.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    try {
      json reply = json::parse(res->body);
      c.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      if (auto usage = reply.find("usage"); usage != reply.end() && usage->is_object()) {
        if (usage->contains("prompt_tokens")) c.prompt_tokens = usage->at("prompt_tokens").get<long>();
        if (usage->contains("completion_tokens"))
          c.completion_tokens = usage->at("completion_tokens").get<long>();
      }
    } catch (const json::exception& e) {
      throw EndpointError(std::string("unusable chat completion response: ") + e.what(), res->status);
    }
    return c;
  }
  throw TransportError(last_problem + " (gave up after " + std::to_string(backend_.max_attempts) +
                           " attempts)",
                       backend_.max_attempts, last_status);
}

std::unique_ptr<CompletionClient> make_client(const Backend& backend, std::span<const Encounter> corpus) {
  backend.validate();
  switch (backend.kind) {
    case BackendKind::Mock: return std::make_unique<MockClient>(corpus);
    case BackendKind::Replay: return std::make_unique<ReplayClient>(backend.replay_path);
    case BackendKind::Endpoint: return std::make_unique<EndpointClient>(backend);
  }
  throw std::invalid_argument("unknown backend");
}

}  // namespace medorder
