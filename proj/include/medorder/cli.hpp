// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medorder/llm_client.hpp"
#include "medorder/promptkit.hpp"

namespace medorder::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kExtractionFailed = 1;  // one or more encounters failed
inline constexpr int kUsageError = 2;

struct RunConfig {
  std::filesystem::path corpus;  // target of the command
  std::filesystem::path train;   // exemplar source; falls back to `corpus`
  std::filesystem::path dev;
  std::filesystem::path test;
  std::filesystem::path predictions;
  std::filesystem::path gold;
  std::filesystem::path system_prompt;  // empty: built-in template
  std::filesystem::path record;         // replay store to append endpoint responses to
  std::filesystem::path out_dir;
  Backend backend;
  DecodeParams decode;
  PromptConfig prompt;
  std::optional<long> token_budget;  // default: max_context_tokens - max_new_tokens
  std::size_t jobs = 1;
  bool json_only = false;
};

int cmd_stats(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_extract(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_audit(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses `args` (without the program name) and runs the selected subcommand:
/// stats, extract, evaluate or audit. Options may also come from a TOML-style
/// file given with --config; command-line flags take precedence.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_hex(std::string_view data);

}  // namespace medorder::cli
