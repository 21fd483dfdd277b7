// SPDX-License-Identifier: Apache-2.0
#include "medorder/scorer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string_view>

#include "medorder/assignment.hpp"
#include "medorder/errors.hpp"
#include "medorder/text.hpp"

namespace medorder {

namespace {

constexpr std::string_view kRemovedPunctuation = ".,;:!?'\"()";

std::vector<std::string> rouge_tokens(std::string_view s) {
  return text::split_whitespace(normalize_text(s));
}

double f1(double overlap, double n_pred, double n_gold) {
  if (overlap <= 0.0) return 0.0;
  const double p = overlap / n_pred;
  const double r = overlap / n_gold;
  return 2.0 * p * r / (p + r);
}

bool absent_text(const std::optional<std::string>& s) {
  return !s || normalize_text(*s).empty();
}

double reason_score(const MedicalOrder& pred, const MedicalOrder& gold) {
  const bool pred_absent = absent_text(pred.reason);
  const bool gold_absent = absent_text(gold.reason);
  if (pred_absent && gold_absent) return 1.0;
  if (pred_absent != gold_absent) return 0.0;
  return rouge1_f1(*pred.reason, *gold.reason);
}

const Provenance& provenance_or_empty(const MedicalOrder& o) {
  static const Provenance kEmpty;
  return o.provenance ? *o.provenance : kEmpty;
}

double ratio_or_one(double num, std::size_t den) {
  return den == 0 ? 1.0 : num / static_cast<double>(den);
}

}  // namespace

std::string normalize_text(std::string_view s) {
  std::string kept;
  kept.reserve(s.size());
  for (char c : s) {
    if (kRemovedPunctuation.find(c) != std::string_view::npos) continue;
    kept.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  std::string out;
  for (const std::string& tok : text::split_whitespace(kept)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

double rouge1_f1(std::string_view candidate, std::string_view reference) {
  const auto cand = rouge_tokens(candidate);
  const auto ref = rouge_tokens(reference);
  if (cand.empty() && ref.empty()) return 1.0;
  if (cand.empty() || ref.empty()) return 0.0;

  std::map<std::string_view, std::size_t> ref_counts;
  for (const std::string& t : ref) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const std::string& t : cand) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return f1(static_cast<double>(overlap), static_cast<double>(cand.size()),
            static_cast<double>(ref.size()));
}

double multilabel_f1(const Provenance& pred, const Provenance& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::size_t common = 0;
  for (TurnId id : pred) common += gold.contains(id) ? 1 : 0;
  return f1(static_cast<double>(common), static_cast<double>(pred.size()),
            static_cast<double>(gold.size()));
}

bool is_scorable(const MedicalOrder& order) {
  return order.has_valid_type() && !absent_text(order.description);
}

std::vector<AlignedPair> match_similarity(const std::vector<std::vector<double>>& sim,
                                          AlignmentMethod method,
                                          const std::vector<std::vector<double>>& agreement) {
  std::vector<AlignedPair> pairs;
  const std::size_t rows = sim.size();
  const std::size_t cols = rows == 0 ? 0 : sim.front().size();

  if (method == AlignmentMethod::Greedy) {
    for (std::size_t g = 0; g < rows; ++g)
      for (std::size_t p = 0; p < cols; ++p)
        if (sim[g][p] > 0.0) pairs.push_back({p, g, sim[g][p]});
    std::sort(pairs.begin(), pairs.end(), [](const AlignedPair& a, const AlignedPair& b) {
      if (a.description_similarity != b.description_similarity)
        return a.description_similarity > b.description_similarity;
      if (a.gold_index != b.gold_index) return a.gold_index < b.gold_index;
      return a.pred_index < b.pred_index;
    });
    std::vector<bool> pred_used(cols, false), gold_used(rows, false);
    std::vector<AlignedPair> taken;
    for (const AlignedPair& c : pairs) {
      if (pred_used[c.pred_index] || gold_used[c.gold_index]) continue;
      pred_used[c.pred_index] = gold_used[c.gold_index] = true;
      taken.push_back(c);
    }
    pairs = std::move(taken);
  } else {
    std::vector<std::vector<PairWeight>> weight(rows, std::vector<PairWeight>(cols));
    for (std::size_t g = 0; g < rows; ++g) {
      for (std::size_t p = 0; p < cols; ++p) {
        if (sim[g][p] <= 0.0) continue;
        const double agree = agreement.empty() ? 0.0 : agreement[g][p];
        const double dist = g > p ? static_cast<double>(g - p) : static_cast<double>(p - g);
        weight[g][p] = {sim[g][p], agree, -dist};
      }
    }
    const std::vector<int> match = max_weight_assignment(weight);
    for (std::size_t g = 0; g < rows; ++g) {
      if (match[g] < 0) continue;
      const auto p = static_cast<std::size_t>(match[g]);
      if (sim[g][p] > 0.0) pairs.push_back({p, g, sim[g][p]});
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const AlignedPair& a, const AlignedPair& b) { return a.gold_index < b.gold_index; });
  return pairs;
}

Alignment align_orders(std::span<const MedicalOrder> pred, std::span<const MedicalOrder> gold,
                       AlignmentMethod method) {
  Alignment out;
  std::vector<std::size_t> live_pred;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    (is_scorable(pred[i]) ? live_pred : out.excluded_pred).push_back(i);
  }

  std::vector<std::vector<double>> sim(gold.size(), std::vector<double>(live_pred.size()));
  std::vector<std::vector<double>> agreement(gold.size(), std::vector<double>(live_pred.size()));
  for (std::size_t g = 0; g < gold.size(); ++g) {
    const std::string gold_desc = gold[g].description.value_or("");
    for (std::size_t k = 0; k < live_pred.size(); ++k) {
      const MedicalOrder& p = pred[live_pred[k]];
      sim[g][k] = rouge1_f1(*p.description, gold_desc);
      agreement[g][k] = (p.known_type() == gold[g].known_type() ? 1.0 : 0.0) +
                        reason_score(p, gold[g]) +
                        multilabel_f1(provenance_or_empty(p), provenance_or_empty(gold[g]));
    }
  }

  std::vector<bool> pred_used(pred.size(), false);
  std::vector<bool> gold_used(gold.size(), false);
  for (AlignedPair pair : match_similarity(sim, method, agreement)) {
    pair.pred_index = live_pred[pair.pred_index];
    pred_used[pair.pred_index] = gold_used[pair.gold_index] = true;
    out.pairs.push_back(pair);
  }
  for (std::size_t p : live_pred)
    if (!pred_used[p]) out.unmatched_pred.push_back(p);
  for (std::size_t g = 0; g < gold.size(); ++g)
    if (!gold_used[g]) out.unmatched_gold.push_back(g);
  return out;
}

SlotTally& SlotTally::operator+=(const SlotTally& o) {
  slots += o.slots;
  description_sum += o.description_sum;
  reason_sum += o.reason_sum;
  provenance_sum += o.provenance_sum;
  type_tp += o.type_tp;
  type_fp += o.type_fp;
  type_fn += o.type_fn;
  matched += o.matched;
  unmatched_pred += o.unmatched_pred;
  unmatched_gold += o.unmatched_gold;
  excluded_pred += o.excluded_pred;
  return *this;
}

SlotTally tally_encounter(std::span<const MedicalOrder> pred, std::span<const MedicalOrder> gold) {
  const Alignment a = align_orders(pred, gold);
  SlotTally t;
  t.matched = a.pairs.size();
  t.unmatched_pred = a.unmatched_pred.size();
  t.unmatched_gold = a.unmatched_gold.size();
  t.excluded_pred = a.excluded_pred.size();
  t.slots = t.matched + t.unmatched_pred + t.unmatched_gold;

  for (const AlignedPair& pair : a.pairs) {
    const MedicalOrder& p = pred[pair.pred_index];
    const MedicalOrder& g = gold[pair.gold_index];
    t.description_sum += pair.description_similarity;
    t.reason_sum += reason_score(p, g);
    t.provenance_sum += multilabel_f1(provenance_or_empty(p), provenance_or_empty(g));
    if (p.known_type() == g.known_type()) ++t.type_tp;
  }
  t.type_fp = pred.size() - t.excluded_pred - t.type_tp;
  t.type_fn = gold.size() - t.type_tp;
  return t;
}

ScoreReport report_from_tally(const SlotTally& t) {
  ScoreReport r;
  r.tally = t;
  r.description_rouge1_f1 = ratio_or_one(t.description_sum, t.slots);
  r.reason_rouge1_f1 = ratio_or_one(t.reason_sum, t.slots);
  r.provenance_multilabel_f1 = ratio_or_one(t.provenance_sum, t.slots);
  r.order_type_strict_f1 =
      ratio_or_one(2.0 * static_cast<double>(t.type_tp), 2 * t.type_tp + t.type_fp + t.type_fn);
  r.avg_score = (r.description_rouge1_f1 + r.reason_rouge1_f1 + r.order_type_strict_f1 +
                 r.provenance_multilabel_f1) /
                4.0;
  return r;
}

ScoreReport score_encounter(std::span<const MedicalOrder> pred, std::span<const MedicalOrder> gold) {
  return report_from_tally(tally_encounter(pred, gold));
}

CorpusScore score_corpus(std::span<const PredictionEntry> predictions, std::span<const Encounter> gold) {
  std::map<std::string_view, const std::vector<MedicalOrder>*> by_id;
  std::set<std::string_view> gold_ids;
  for (const Encounter& e : gold) gold_ids.insert(e.id);
  for (const auto& [id, orders] : predictions) {
    if (!gold_ids.contains(id)) throw ValidationError("prediction id '" + id + "' is not in the gold corpus");
    if (!by_id.emplace(id, &orders).second) throw ValidationError("duplicate prediction id '" + id + "'");
  }

  static const std::vector<MedicalOrder> kNoPrediction;
  CorpusScore out;
  SlotTally pooled;
  for (const Encounter& e : gold) {
    auto it = by_id.find(e.id);
    const auto& pred = it == by_id.end() ? kNoPrediction : *it->second;
    SlotTally t = tally_encounter(pred, e.gold_or_empty());
    pooled += t;
    out.per_encounter.emplace_back(e.id, report_from_tally(t));
  }
  out.overall = report_from_tally(pooled);
  return out;
}

nlohmann::ordered_json report_to_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["description_ROUGE1_f1"] = r.description_rouge1_f1;
  j["reason_ROUGE1_f1"] = r.reason_rouge1_f1;
  j["order_type_Strict_f1"] = r.order_type_strict_f1;
  j["provenance_MultiLabel_f1"] = r.provenance_multilabel_f1;
  j["avg_score"] = r.avg_score;
  j["counts"] = {{"slots", r.tally.slots},
                 {"matched", r.tally.matched},
                 {"unmatched_pred", r.tally.unmatched_pred},
                 {"unmatched_gold", r.tally.unmatched_gold},
                 {"excluded_pred", r.tally.excluded_pred},
                 {"order_type_tp", r.tally.type_tp},
                 {"order_type_fp", r.tally.type_fp},
                 {"order_type_fn", r.tally.type_fn}};
  return j;
}

nlohmann::ordered_json corpus_score_to_json(const CorpusScore& score) {
  nlohmann::ordered_json j;
  j["overall"] = report_to_json(score.overall);
  j["per_encounter"] = nlohmann::ordered_json::array();
  for (const auto& [id, report] : score.per_encounter) {
    nlohmann::ordered_json e = report_to_json(report);
    e["id"] = id;
    j["per_encounter"].push_back(std::move(e));
  }
  return j;
}

std::string format_report_table(const ScoreReport& r) {
  const std::pair<const char*, double> rows[] = {
      {"description_ROUGE1_f1", r.description_rouge1_f1},
      {"reason_ROUGE1_f1", r.reason_rouge1_f1},
      {"order_type_Strict_f1", r.order_type_strict_f1},
      {"provenance_MultiLabel_f1", r.provenance_multilabel_f1},
      {"avg_score", r.avg_score},
  };
  std::string out = "Metric                      Score\n";
  char line[64];
  for (const auto& [name, value] : rows) {
    std::snprintf(line, sizeof line, "%-26s %6.2f\n", name, value * 100.0);
    out += line;
  }
  return out;
}

}  // namespace medorder
