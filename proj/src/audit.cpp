// SPDX-License-Identifier: Apache-2.0
#include "medorder/audit.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "medorder/errors.hpp"
#include "medorder/scorer.hpp"
#include "medorder/text.hpp"

namespace medorder {

namespace {

// Sorted for binary search.
constexpr std::array<std::string_view, 58> kStopwords = {
    "a",     "about", "after", "an",    "and",   "are",   "as",    "at",    "be",    "been",
    "before", "being", "by",   "can",   "could", "did",   "do",    "does",  "for",   "from",
    "had",   "has",   "have",  "he",    "her",   "his",   "i",     "if",    "in",    "into",
    "is",    "it",    "its",   "may",   "me",    "might", "my",    "of",    "on",    "or",
    "our",   "over",  "she",   "should", "so",   "that",  "the",   "their", "them",  "then",
    "these", "this",  "those", "to",    "up",    "was",   "we",    "were"};
static_assert(std::is_sorted(kStopwords.begin(), kStopwords.end()));

struct TranscriptIndex {
  std::set<std::string> tokens;
};

TranscriptIndex index_transcript(const Encounter& e) {
  TranscriptIndex idx;
  for (const Turn& t : e.turns)
    for (std::string& tok : text::split_whitespace(normalize_text(t.utterance)))
      idx.tokens.insert(std::move(tok));
  return idx;
}

bool missing(const std::optional<std::string>& s) { return !s || normalize_text(*s).empty(); }

Groundedness classify(std::string_view txt, const Encounter& e, const TranscriptIndex& idx) {
  const std::string norm = normalize_text(txt);
  for (const Turn& t : e.turns) {
    if (t.utterance.find(txt) != std::string::npos) return Groundedness::Grounded;
    if (!norm.empty() && normalize_text(t.utterance).find(norm) != std::string::npos)
      return Groundedness::Grounded;
  }
  std::size_t content = 0, found = 0;
  for (const std::string& tok : text::split_whitespace(norm)) {
    if (is_stopword(tok)) continue;
    ++content;
    found += idx.tokens.contains(tok) ? 1 : 0;
  }
  if (found == content) return Groundedness::Grounded;
  if (2 * found >= content) return Groundedness::PartiallyGrounded;
  return Groundedness::Ungrounded;
}

}  // namespace

std::string_view to_string(Groundedness g) {
  switch (g) {
    case Groundedness::Grounded: return "grounded";
    case Groundedness::PartiallyGrounded: return "partially_grounded";
    case Groundedness::Ungrounded: return "ungrounded";
  }
  return "";
}

bool is_stopword(std::string_view token) {
  return std::binary_search(kStopwords.begin(), kStopwords.end(), token);
}

Groundedness groundedness(std::string_view txt, const Encounter& encounter) {
  return classify(txt, encounter, index_transcript(encounter));
}

Groundedness groundedness_check(const MedicalOrder& order, const Encounter& encounter) {
  if (!order.description) return Groundedness::Ungrounded;
  return groundedness(*order.description, encounter);
}

SetCoverage provenance_coverage(const Provenance& predicted, const Provenance& gold) {
  if (predicted.empty() && gold.empty()) return {1.0, 1.0};
  std::size_t common = 0;
  for (TurnId id : predicted) common += gold.contains(id) ? 1 : 0;
  SetCoverage c;
  if (!predicted.empty()) c.precision = static_cast<double>(common) / static_cast<double>(predicted.size());
  if (!gold.empty()) c.recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return c;
}

double AuditReport::fraction(std::size_t count) const {
  return total_orders == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total_orders);
}

AuditReport& AuditReport::operator+=(const AuditReport& o) {
  total_orders += o.total_orders;
  missing_description += o.missing_description;
  invalid_order_type += o.invalid_order_type;
  for (const auto& [label, n] : o.invalid_type_labels) invalid_type_labels[label] += n;
  missing_reason += o.missing_reason;
  missing_provenance += o.missing_provenance;
  ungrounded_description += o.ungrounded_description;
  partially_grounded_description += o.partially_grounded_description;
  ungrounded_reason += o.ungrounded_reason;
  partially_grounded_reason += o.partially_grounded_reason;
  return *this;
}

AuditReport audit_predictions(std::span<const PredictionEntry> predictions,
                              std::span<const Encounter> corpus) {
  std::unordered_map<std::string_view, const Encounter*> by_id;
  for (const Encounter& e : corpus) by_id.emplace(e.id, &e);

  AuditReport r;
  for (const auto& [id, orders] : predictions) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("prediction id '" + id + "' is not in the corpus");
    const Encounter& enc = *it->second;
    const TranscriptIndex idx = index_transcript(enc);

    for (const MedicalOrder& o : orders) {
      ++r.total_orders;
      if (!o.has_valid_type()) {
        ++r.invalid_order_type;
        ++r.invalid_type_labels[o.order_type];
      }
      if (missing(o.reason)) {
        ++r.missing_reason;
      } else {
        switch (classify(*o.reason, enc, idx)) {
          case Groundedness::Ungrounded: ++r.ungrounded_reason; break;
          case Groundedness::PartiallyGrounded: ++r.partially_grounded_reason; break;
          case Groundedness::Grounded: break;
        }
      }
      if (missing(o.description)) {
        ++r.missing_description;
      } else {
        switch (classify(*o.description, enc, idx)) {
          case Groundedness::Ungrounded: ++r.ungrounded_description; break;
          case Groundedness::PartiallyGrounded: ++r.partially_grounded_description; break;
          case Groundedness::Grounded: break;
        }
      }
      if (!o.provenance || o.provenance->empty()) ++r.missing_provenance;
    }
  }
  return r;
}

nlohmann::ordered_json audit_to_json(const AuditReport& r) {
  auto entry = [&](std::size_t n) {
    return nlohmann::ordered_json{{"count", n}, {"fraction", r.fraction(n)}};
  };
  nlohmann::ordered_json j;
  j["total_orders"] = r.total_orders;
  j["missing_description"] = entry(r.missing_description);
  j["invalid_order_type"] = entry(r.invalid_order_type);
  j["invalid_order_type"]["labels"] = nlohmann::ordered_json::object();
  for (const auto& [label, n] : r.invalid_type_labels) j["invalid_order_type"]["labels"][label] = n;
  j["missing_reason"] = entry(r.missing_reason);
  j["missing_provenance"] = entry(r.missing_provenance);
  j["groundedness_method"] = "token containment proxy";
  j["ungrounded_description"] = r.ungrounded_description;
  j["partially_grounded_description"] = r.partially_grounded_description;
  j["ungrounded_reason"] = r.ungrounded_reason;
  j["partially_grounded_reason"] = r.partially_grounded_reason;
  return j;
}

std::string format_audit_table(const AuditReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "Predicted orders: %zu\n\n%-32s %7s %8s\n", r.total_orders,
                "Category", "Count", "Percent");
  out += line;
  auto row = [&](const char* name, std::size_t n) {
    std::snprintf(line, sizeof line, "%-32s %7zu %7.1f%%\n", name, n, 100.0 * r.fraction(n));
    out += line;
  };
  row("missing description", r.missing_description);
  row("invalid order_type", r.invalid_order_type);
  for (const auto& [label, n] : r.invalid_type_labels) {
    std::snprintf(line, sizeof line, "  %-30s %7zu\n", label.empty() ? "(empty)" : label.c_str(), n);
    out += line;
  }
  row("missing reason", r.missing_reason);
  row("missing provenance", r.missing_provenance);
  out += "\nGroundedness (token containment proxy)\n";
  row("ungrounded description", r.ungrounded_description);
  row("partially grounded description", r.partially_grounded_description);
  row("ungrounded reason", r.ungrounded_reason);
  row("partially grounded reason", r.partially_grounded_reason);
  return out;
}

}  // namespace medorder
