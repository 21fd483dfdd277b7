// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "medorder/parser.hpp"
#include "medorder/types.hpp"

namespace medorder {

/// Lowercases, deletes . , ; : ! ? ' " ( ), collapses whitespace and trims.
/// Hyphens and slashes are kept ("x-ray", "b/p").
std::string normalize_text(std::string_view s);

/// Clipped-unigram F1 over whitespace tokens of the normalized strings.
/// Both sides empty scores 1; exactly one side empty scores 0.
double rouge1_f1(std::string_view candidate, std::string_view reference);

/// Set F1. Both empty scores 1; exactly one empty scores 0.
double multilabel_f1(const Provenance& pred, const Provenance& gold);

// An order takes part in alignment only with a known type and a description
// that is non-empty after normalization.
bool is_scorable(const MedicalOrder& order);

struct AlignedPair {
  std::size_t pred_index = 0;
  std::size_t gold_index = 0;
  double description_similarity = 0.0;

  friend bool operator==(const AlignedPair&, const AlignedPair&) = default;
};

struct Alignment {
  std::vector<AlignedPair> pairs;
  std::vector<std::size_t> unmatched_pred;
  std::vector<std::size_t> unmatched_gold;
  std::vector<std::size_t> excluded_pred;
};

enum class AlignmentMethod {
  Optimal,  // maximum total similarity
  Greedy,   // descending similarity, ties by (gold_index, pred_index)
};

/// Pairs rows (gold) with columns (pred) of a similarity matrix one-to-one.
/// Entries <= 0 are never paired. With Optimal, ties in total similarity go to
/// the assignment with the larger `agreement` sum (may be empty), then to
/// pairs whose list positions are closest. Result is sorted by gold index.
std::vector<AlignedPair> match_similarity(const std::vector<std::vector<double>>& similarity,
                                          AlignmentMethod method,
                                          const std::vector<std::vector<double>>& agreement = {});

/// One-to-one pairing on description similarity (rouge1_f1 of normalized
/// descriptions). Among assignments with equal total similarity, the one whose
/// pairs agree most on type, reason and provenance wins.
Alignment align_orders(std::span<const MedicalOrder> pred, std::span<const MedicalOrder> gold,
                       AlignmentMethod method = AlignmentMethod::Optimal);

// Sums that corpus-level scores are pooled from. Every matched pair and every
// unmatched item is one slot; excluded predictions add no slot.
struct SlotTally {
  std::size_t slots = 0;
  double description_sum = 0.0;
  double reason_sum = 0.0;
  double provenance_sum = 0.0;
  std::size_t type_tp = 0;
  std::size_t type_fp = 0;
  std::size_t type_fn = 0;

  std::size_t matched = 0;
  std::size_t unmatched_pred = 0;
  std::size_t unmatched_gold = 0;
  std::size_t excluded_pred = 0;

  SlotTally& operator+=(const SlotTally& other);
};

struct ScoreReport {
  double description_rouge1_f1 = 0.0;
  double reason_rouge1_f1 = 0.0;
  double order_type_strict_f1 = 0.0;
  double provenance_multilabel_f1 = 0.0;
  double avg_score = 0.0;
  SlotTally tally;
};

SlotTally tally_encounter(std::span<const MedicalOrder> pred, std::span<const MedicalOrder> gold);

// With zero slots and zero type counts every field scores 1 (nothing to find, nothing found).
ScoreReport report_from_tally(const SlotTally& tally);

ScoreReport score_encounter(std::span<const MedicalOrder> pred, std::span<const MedicalOrder> gold);

struct CorpusScore {
  ScoreReport overall;
  std::vector<std::pair<std::string, ScoreReport>> per_encounter;  // gold corpus order
};

/// Pools slot sums and type counts over the whole gold corpus. Gold encounters
/// without a prediction entry are scored against an empty prediction.
/// Throws ValidationError on unknown or duplicate prediction ids.
CorpusScore score_corpus(std::span<const PredictionEntry> predictions,
                         std::span<const Encounter> gold);

nlohmann::ordered_json report_to_json(const ScoreReport& report);
nlohmann::ordered_json corpus_score_to_json(const CorpusScore& score);

// Metric rows with values x100 to two decimals.
std::string format_report_table(const ScoreReport& report);

}  // namespace medorder
