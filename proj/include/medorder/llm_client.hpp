// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "medorder/promptkit.hpp"
#include "medorder/types.hpp"

namespace medorder {

struct DecodeParams {
  double temperature = 0.2;
  double top_p = 0.9;
  long max_new_tokens = 1024;
  long max_context_tokens = 8192;
  std::optional<long> seed;

  // Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

enum class BackendKind { Endpoint, Mock, Replay };

std::string_view to_string(BackendKind kind);
std::optional<BackendKind> parse_backend_kind(std::string_view name);

struct Backend {
  BackendKind kind = BackendKind::Mock;
  std::string endpoint_url;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model_name;
  std::filesystem::path replay_path;
  std::string api_key_env = "MEDORDER_API_KEY";
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::seconds timeout{300};

  // Endpoint needs url and model name; replay needs a store path.
  void validate() const;
};

struct Completion {
  std::string text;
  std::chrono::milliseconds latency{0};
  std::optional<long> prompt_tokens;
  std::optional<long> completion_tokens;
  int attempts = 1;
};

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual Completion complete(const PromptBundle& bundle, const DecodeParams& params) = 0;
};

// Text the mock returns for encounters it has no gold orders for.
inline constexpr std::string_view kMockCannedResponse =
    "No medical orders were identified in this conversation.";

/// Answers with the rendered gold orders of the bundle's encounter.
class MockClient final : public CompletionClient {
 public:
  explicit MockClient(std::span<const Encounter> corpus);
  Completion complete(const PromptBundle& bundle, const DecodeParams& params) override;

 private:
  std::unordered_map<std::string, std::string> responses_;
};

/// Reads a JSON-lines store of {"id", "response"} records. Later records win.
/// Throws PersistenceError if the file is unreadable or a line is malformed.
std::map<std::string, std::string> load_replay_store(const std::filesystem::path& path);

/// Appends one record. Returns true (and warns on stderr) when the id was
/// already present, in which case the new response wins. Safe to call from
/// several threads. Throws PersistenceError on IO failure.
bool record_replay(std::string_view id, std::string_view response, const std::filesystem::path& store);

class ReplayClient final : public CompletionClient {
 public:
  explicit ReplayClient(const std::filesystem::path& store);
  // Throws LookupError when the store has no response for the encounter.
  Completion complete(const PromptBundle& bundle, const DecodeParams& params) override;

 private:
  std::map<std::string, std::string> responses_;
};

/// OpenAI-compatible chat-completions client. The system text, the exemplar
/// user/assistant pair and the query map onto the message list in order.
/// Connection failures, timeouts and HTTP 429/5xx are retried with
/// exponential backoff up to `max_attempts`; other statuses fail at once.
class EndpointClient final : public CompletionClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit EndpointClient(Backend backend, Sleeper sleeper = {});
  Completion complete(const PromptBundle& bundle, const DecodeParams& params) override;

 private:
  Backend backend_;
  Sleeper sleep_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

nlohmann::ordered_json chat_request_body(const PromptBundle& bundle, const DecodeParams& params,
                                         std::string_view model_name);

/// `corpus` feeds the mock backend and is ignored by the others.
std::unique_ptr<CompletionClient> make_client(const Backend& backend, std::span<const Encounter> corpus);

}  // namespace medorder
