// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medorder/types.hpp"

namespace medorder {

enum class ShotMode { Zero, Few };

// Whitespace tokens are inflated by this factor to approximate model tokens.
inline constexpr double kDefaultTokenInflation = 1.3;
// 8192-token context minus a 1024-token generation allowance.
inline constexpr long kDefaultTokenBudget = 8192 - 1024;

/// The system-instruction template compiled into the library. `{{ORDER_TYPES}}`
/// is substituted by build_prompt.
std::string_view default_system_instruction();

/// Reads an instruction template from disk. Throws LookupError if unreadable.
std::string load_system_instruction(const std::filesystem::path& path);

struct PromptConfig {
  ShotMode shot_mode = ShotMode::Zero;
  std::optional<std::string> exemplar_encounter_id;
  std::string system_instruction{default_system_instruction()};
  long token_budget = kDefaultTokenBudget;
  double token_inflation = kDefaultTokenInflation;
  // Drop turns from the middle of the target transcript instead of failing
  // when the prompt is over budget. The first and last turns are always kept.
  bool truncate_middle = false;
};

struct Exchange {
  std::string user;
  std::string assistant;

  friend bool operator==(const Exchange&, const Exchange&) = default;
};

struct PromptBundle {
  std::string encounter_id;
  std::string system;
  std::vector<Exchange> exchanges;  // at most one exemplar pair
  std::string query;
  long estimated_tokens = 0;
  std::size_t dropped_turns = 0;  // non-zero only with truncate_middle

  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

struct Exemplar {
  Encounter encounter;
  std::vector<MedicalOrder> orders;
};

// `[<turn_id>] <SPEAKER>: <utterance>`; line breaks inside the utterance become spaces.
std::string render_turn(const Turn& turn);

// One line per turn, joined by '\n', no trailing newline.
std::string render_transcript(const Encounter& encounter);

// `<order_type>, <description>, <reason|null>, [<id>, <id>, ...]`
std::string render_order(const MedicalOrder& order);
std::string render_gold_orders(std::span<const MedicalOrder> orders);

// User-turn text for an encounter: a short lead-in followed by the transcript.
std::string render_query(const Encounter& encounter);

long estimate_tokens(std::string_view text, double inflation = kDefaultTokenInflation);

/// Assembles the system text, optional exemplar exchange and query.
///
/// Few-shot mode requires an exemplar whose id differs from the target's
/// (std::invalid_argument otherwise). Throws BudgetError when the estimate
/// exceeds cfg.token_budget, unless cfg.truncate_middle can bring it under.
PromptBundle build_prompt(const Encounter& target, const PromptConfig& cfg,
                          const Exemplar* exemplar = nullptr);

/// Picks the in-context example. With an id, returns that encounter (LookupError
/// if absent). Otherwise the encounter whose gold orders cover the most distinct
/// order types, ties to the lexicographically smallest id. Encounters listed in
/// `exclude_ids` are skipped. DomainError if no encounter has gold orders.
Exemplar select_exemplar(std::span<const Encounter> corpus,
                         const std::optional<std::string>& id = std::nullopt,
                         std::span<const std::string> exclude_ids = {});

}  // namespace medorder
