// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "medorder/types.hpp"

namespace medorder {

enum class CorpusRole {
  WithGold,         // every encounter must carry an order list
  TranscriptsOnly,  // order lists, if present, are ignored
};

/// Reads a corpus file: a JSON array of encounter objects.
///
/// Accepted field aliases: turn text under "transcript" or "utterance";
/// order list under "expected_orders" or "orders"; provenance as a list of
/// integers, a list of integer strings, or a single space/comma separated
/// string. Speaker labels are matched case-insensitively.
///
/// Throws ParseError (with byte offset) on malformed JSON and
/// ValidationError naming the encounter on any schema or invariant failure.
std::vector<Encounter> load_corpus(const std::filesystem::path& path, CorpusRole role);

/// Same as load_corpus, from an in-memory document. `source` names it in errors.
std::vector<Encounter> parse_corpus(std::string_view json_text, CorpusRole role,
                                    std::string_view source = "<memory>");

nlohmann::ordered_json corpus_to_json(std::span<const Encounter> corpus);
void save_corpus(std::span<const Encounter> corpus, const std::filesystem::path& path);

// Empty iff every Encounter invariant holds.
std::vector<Violation> validate_encounter(const Encounter& encounter);

struct CorpusStats {
  std::size_t encounter_count = 0;
  std::map<OrderType, std::size_t> orders_by_type;
  double mean_turns = 0.0;
  std::size_t max_turns = 0;
  std::map<Speaker, std::size_t> turns_by_speaker;
  std::map<Speaker, std::size_t> tokens_by_speaker;  // whitespace tokens
  double missing_reason_fraction = 0.0;              // over gold orders
  double mean_provenance_span = 0.0;                 // mean turn ids per gold order

  std::size_t total_orders() const;
};

/// Throws DomainError on an empty corpus.
CorpusStats corpus_stats(std::span<const Encounter> corpus);

nlohmann::ordered_json stats_to_json(const CorpusStats& stats);

/// One header row and one data row in the layout of the usual per-split
/// breakdown (#Enc, Follow-Up, Imaging, Lab, Medication), then turn and
/// token profile lines.
std::string format_stats_table(const CorpusStats& stats, std::string_view split_label);

}  // namespace medorder
