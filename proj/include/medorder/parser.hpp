// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "medorder/types.hpp"

namespace medorder {

struct DiscardedLine {
  std::string line;
  std::string reason;

  friend bool operator==(const DiscardedLine&, const DiscardedLine&) = default;
};

struct ParseOutcome {
  // Orders with an out-of-set type or no description are kept; their
  // violations are listed at the same index in `violations`.
  std::vector<MedicalOrder> orders;
  std::vector<std::vector<Violation>> violations;
  std::size_t repaired_count = 0;
  std::vector<DiscardedLine> discarded_lines;

  bool order_is_valid(std::size_t i) const;
};

// Result of a strict single-line parse, before any encounter-level checks.
struct OrderLine {
  MedicalOrder order;
  std::vector<std::string> non_integer_tokens;  // from the provenance list
};

/// Strict parse of `type, description, reason, [ids]`. The provenance field
/// is the trailing bracketed list (or a null literal); the type ends at the
/// first comma and the reason starts after the last comma before provenance,
/// so descriptions may contain commas. Leading list bullets are ignored.
std::optional<OrderLine> parse_order_line(std::string_view line);

/// Applies, in order: (1) split a trailing `[...]` off as provenance even
/// without a preceding comma; (2) insert the comma after a leading order type
/// followed by whitespace; (3) with only type and description left, add a
/// null reason. Returns the line if it already parses, the repaired line if
/// the rules make it parse, and nothing otherwise.
std::optional<std::string> repair_line(std::string_view line);

/// Turns raw model text into orders. Never throws: blank lines are skipped,
/// anything that neither parses nor repairs goes to discarded_lines.
/// Provenance ids that are not turns of `encounter` are reported and removed.
ParseOutcome parse_output(std::string_view raw, const Encounter& encounter);

/// Flags an out-of-set order_type, an empty description, and provenance ids
/// that are not turn ids of the encounter.
std::vector<Violation> validate_order(const MedicalOrder& order, const Encounter& encounter);

using PredictionEntry = std::pair<std::string, std::vector<MedicalOrder>>;

nlohmann::ordered_json order_to_json(const MedicalOrder& order);

// Entries are written in the given order.
nlohmann::ordered_json predictions_to_json(std::span<const PredictionEntry> entries);

/// Writes the prediction file, one object per encounter sorted by id.
/// Absent fields are written as JSON null. Throws PersistenceError.
void serialize_predictions(const std::map<std::string, ParseOutcome>& outcomes,
                           const std::filesystem::path& path);
void serialize_predictions(std::span<const PredictionEntry> entries,
                           const std::filesystem::path& path);

/// Reads a prediction file in file order, keeping duplicate ids. Also accepts
/// gold corpus files (orders under "expected_orders", transcript ignored).
/// Throws ParseError / ValidationError.
std::vector<PredictionEntry> parse_predictions(std::string_view json_text,
                                               std::string_view source = "<memory>");
std::vector<PredictionEntry> load_predictions(const std::filesystem::path& path);

}  // namespace medorder
