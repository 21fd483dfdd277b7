// SPDX-License-Identifier: Apache-2.0
#include "medorder/promptkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "medorder/errors.hpp"
#include "medorder/text.hpp"
#include "system_instruction_text.inc"  // generated from prompts/system_instruction.txt

namespace medorder {

namespace {

constexpr std::string_view kOrderTypesPlaceholder = "{{ORDER_TYPES}}";
constexpr std::string_view kQueryLead =
    "Extract all medical orders from the following conversation.\n\n";

std::string expand_template(std::string_view tmpl) {
  std::string out(tmpl);
  const std::string types = allowed_order_types_text();
  for (auto pos = out.find(kOrderTypesPlaceholder); pos != std::string::npos;
       pos = out.find(kOrderTypesPlaceholder, pos + types.size())) {
    out.replace(pos, kOrderTypesPlaceholder.size(), types);
  }
  // a trailing newline in the template file is not part of the instruction
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out;
}

std::string flatten_line_breaks(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r' && i + 1 < s.size() && s[i + 1] == '\n') continue;
    out.push_back(s[i] == '\n' || s[i] == '\r' ? ' ' : s[i]);
  }
  return out;
}

std::size_t whitespace_tokens(std::string_view s) { return text::split_whitespace(s).size(); }

long inflate(std::size_t tokens, double inflation) {
  return static_cast<long>(std::ceil(static_cast<double>(tokens) * inflation));
}

}  // namespace

std::string_view default_system_instruction() { return kSystemInstructionTemplate; }

std::string load_system_instruction(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot read system instruction template: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string render_turn(const Turn& turn) {
  std::string line = "[" + std::to_string(turn.turn_id) + "] ";
  line += to_string(turn.speaker);
  line += ": ";
  line += flatten_line_breaks(turn.utterance);
  return line;
}

std::string render_transcript(const Encounter& encounter) {
  std::string out;
  for (const Turn& t : encounter.turns) {
    if (!out.empty()) out.push_back('\n');
    out += render_turn(t);
  }
  return out;
}

std::string render_order(const MedicalOrder& order) {
  auto field = [](const std::optional<std::string>& v) {
    return v ? flatten_line_breaks(*v) : std::string("null");
  };
  std::string line = order.order_type + ", " + field(order.description) + ", " + field(order.reason) + ", ";
  if (!order.provenance) return line + "null";
  line.push_back('[');
  bool first = true;
  for (TurnId id : *order.provenance) {
    if (!first) line += ", ";
    line += std::to_string(id);
    first = false;
  }
  line.push_back(']');
  return line;
}

std::string render_gold_orders(std::span<const MedicalOrder> orders) {
  std::string out;
  for (const MedicalOrder& o : orders) {
    if (!out.empty()) out.push_back('\n');
    out += render_order(o);
  }
  return out;
}

std::string render_query(const Encounter& encounter) {
  return std::string(kQueryLead) + render_transcript(encounter);
}

long estimate_tokens(std::string_view text, double inflation) {
  return inflate(whitespace_tokens(text), inflation);
}

PromptBundle build_prompt(const Encounter& target, const PromptConfig& cfg, const Exemplar* exemplar) {
  if (cfg.token_budget <= 0) throw std::invalid_argument("token_budget must be positive");

  PromptBundle bundle;
  bundle.encounter_id = target.id;
  bundle.system = expand_template(cfg.system_instruction);

  if (cfg.shot_mode == ShotMode::Few) {
    if (exemplar == nullptr) throw std::invalid_argument("few-shot prompt needs an exemplar");
    if (exemplar->encounter.id == target.id)
      throw std::invalid_argument("exemplar '" + target.id + "' is the target encounter");
    bundle.exchanges.push_back({render_query(exemplar->encounter), render_gold_orders(exemplar->orders)});
  }

  std::size_t fixed = whitespace_tokens(bundle.system) + whitespace_tokens(kQueryLead);
  for (const Exchange& ex : bundle.exchanges)
    fixed += whitespace_tokens(ex.user) + whitespace_tokens(ex.assistant);

  std::vector<std::string> lines;
  std::vector<std::size_t> line_tokens;
  std::size_t transcript_tokens = 0;
  for (const Turn& t : target.turns) {
    lines.push_back(render_turn(t));
    line_tokens.push_back(whitespace_tokens(lines.back()));
    transcript_tokens += line_tokens.back();
  }

  long estimate = inflate(fixed + transcript_tokens, cfg.token_inflation);
  std::size_t keep = lines.size();
  if (estimate > cfg.token_budget) {
    if (!cfg.truncate_middle || lines.size() <= 2)
      throw BudgetError(target.id, estimate, cfg.token_budget);
    // Keep the first ceil(k/2) and last floor(k/2) turns for the largest k that fits.
    auto cost = [&](std::size_t k) {
      std::size_t head = (k + 1) / 2, tail = k / 2, sum = fixed;
      for (std::size_t i = 0; i < head; ++i) sum += line_tokens[i];
      for (std::size_t i = lines.size() - tail; i < lines.size(); ++i) sum += line_tokens[i];
      return inflate(sum, cfg.token_inflation);
    };
    keep = lines.size() - 1;
    while (keep > 2 && cost(keep) > cfg.token_budget) --keep;
    estimate = cost(keep);
    if (estimate > cfg.token_budget) throw BudgetError(target.id, estimate, cfg.token_budget);
  }

  const std::size_t head = keep == lines.size() ? keep : (keep + 1) / 2;
  const std::size_t tail_start = keep == lines.size() ? lines.size() : lines.size() - keep / 2;
  bundle.query = kQueryLead;
  bool first = true;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i >= head && i < tail_start) continue;
    if (!first) bundle.query.push_back('\n');
    bundle.query += lines[i];
    first = false;
  }
  bundle.estimated_tokens = estimate;
  bundle.dropped_turns = lines.size() - keep;
  return bundle;
}

Exemplar select_exemplar(std::span<const Encounter> corpus, const std::optional<std::string>& id,
                         std::span<const std::string> exclude_ids) {
  if (id) {
    auto it = std::find_if(corpus.begin(), corpus.end(), [&](const Encounter& e) { return e.id == *id; });
    if (it == corpus.end()) throw LookupError("exemplar encounter '" + *id + "' not found");
    if (!it->gold_orders) throw DomainError("exemplar encounter '" + *id + "' has no gold orders");
    return {*it, *it->gold_orders};
  }

  const Encounter* best = nullptr;
  std::size_t best_coverage = 0;
  for (const Encounter& e : corpus) {
    if (!e.gold_orders || e.gold_orders->empty()) continue;
    if (std::find(exclude_ids.begin(), exclude_ids.end(), e.id) != exclude_ids.end()) continue;
    std::set<OrderType> types;
    for (const MedicalOrder& o : *e.gold_orders)
      if (auto t = o.known_type()) types.insert(*t);
    const std::size_t coverage = types.size();
    if (best == nullptr || coverage > best_coverage || (coverage == best_coverage && e.id < best->id)) {
      best = &e;
      best_coverage = coverage;
    }
  }
  if (best == nullptr) throw DomainError("no encounter with gold orders to use as exemplar");
  return {*best, *best->gold_orders};
}

}  // namespace medorder
