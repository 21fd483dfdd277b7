// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace medorder {

struct Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed JSON input. `byte_offset` is the 1-based position of the offending byte.
struct ParseError : public Error {
  std::size_t byte_offset;
  ParseError(const std::string& message, std::size_t offset)
      : Error(message), byte_offset(offset) {}
};

struct ValidationError : public Error {
  using Error::Error;
};

// Operation is undefined on its input (empty corpus, no candidate exemplar, ...).
struct DomainError : public Error {
  using Error::Error;
};

struct LookupError : public Error {
  using Error::Error;
};

struct BudgetError : public Error {
  std::string encounter_id;
  long estimated_tokens;
  long budget;
  BudgetError(const std::string& id, long estimated, long limit)
      : Error("prompt for encounter '" + id + "' needs ~" + std::to_string(estimated) +
              " tokens, budget is " + std::to_string(limit)),
        encounter_id(id),
        estimated_tokens(estimated),
        budget(limit) {}
};

// Connection failures, timeouts and retryable HTTP statuses once all attempts are spent.
struct TransportError : public Error {
  int attempts;
  int last_status;  // 0 when no HTTP response was received
  TransportError(const std::string& message, int attempts_, int status = 0)
      : Error(message), attempts(attempts_), last_status(status) {}
};

// Non-retryable HTTP failure or an unusable response body.
struct EndpointError : public Error {
  int status;
  EndpointError(const std::string& message, int status_) : Error(message), status(status_) {}
};

struct PersistenceError : public Error {
  using Error::Error;
};

}  // namespace medorder
