// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "json.hpp"
#include "medorder/parser.hpp"
#include "medorder/types.hpp"

namespace medorder {

enum class Groundedness { Grounded, PartiallyGrounded, Ungrounded };

std::string_view to_string(Groundedness g);

// Articles, prepositions, conjunctions, pronouns and auxiliaries ignored by
// the groundedness check.
bool is_stopword(std::string_view normalized_token);

/// Token-containment proxy for hallucination. Grounded when `text` occurs
/// verbatim in an utterance or when every normalized non-stopword token
/// occurs somewhere in the transcript; partially grounded when at least half
/// do; ungrounded otherwise. Text without content tokens counts as grounded.
Groundedness groundedness(std::string_view text, const Encounter& encounter);

// Checks the description; an order without one is reported ungrounded.
Groundedness groundedness_check(const MedicalOrder& order, const Encounter& encounter);

struct SetCoverage {
  double precision = 0.0;
  double recall = 0.0;
};

// Precision and recall of predicted against gold turn ids. Two empty sets give (1, 1).
SetCoverage provenance_coverage(const Provenance& predicted, const Provenance& gold);

struct AuditReport {
  std::size_t total_orders = 0;
  std::size_t missing_description = 0;
  std::size_t invalid_order_type = 0;
  std::map<std::string, std::size_t> invalid_type_labels;
  std::size_t missing_reason = 0;
  std::size_t missing_provenance = 0;
  std::size_t ungrounded_description = 0;
  std::size_t partially_grounded_description = 0;
  std::size_t ungrounded_reason = 0;
  std::size_t partially_grounded_reason = 0;

  double fraction(std::size_t count) const;
  AuditReport& operator+=(const AuditReport& other);
  friend bool operator==(const AuditReport&, const AuditReport&) = default;
};

/// Counts schema violations and ungrounded text over every predicted order.
/// A field is missing when absent or empty after normalization; provenance
/// is missing when absent or empty. Throws ValidationError when a prediction
/// id is not in the corpus.
AuditReport audit_predictions(std::span<const PredictionEntry> predictions,
                              std::span<const Encounter> corpus);

nlohmann::ordered_json audit_to_json(const AuditReport& report);
std::string format_audit_table(const AuditReport& report);

}  // namespace medorder
