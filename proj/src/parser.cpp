// SPDX-License-Identifier: Apache-2.0
#include "medorder/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "medorder/errors.hpp"
#include "medorder/text.hpp"

namespace medorder {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// Drops list bullets ("- ", "* ", "• ", "3. ", "3) ") in front of an order line.
std::string_view strip_bullet(std::string_view s) {
  s = text::trim(s);
  for (std::string_view bullet : {"- ", "* ", "• "}) {
    if (s.starts_with(bullet)) return text::trim(s.substr(bullet.size()));
  }
  std::size_t i = 0;
  while (i < s.size() && is_digit(s[i])) ++i;
  if (i > 0 && i + 1 < s.size() && (s[i] == '.' || s[i] == ')') && s[i + 1] == ' ')
    return text::trim(s.substr(i + 2));
  return s;
}

// Markdown emphasis or quoting around a single field.
std::string_view unwrap_field(std::string_view s) {
  s = text::trim(s);
  auto wrapper = [](char c) { return c == '"' || c == '`' || c == '*'; };
  while (!s.empty() && wrapper(s.front())) s.remove_prefix(1);
  while (!s.empty() && wrapper(s.back())) s.remove_suffix(1);
  return text::trim(s);
}

std::optional<std::string> optional_field(std::string_view s) {
  s = unwrap_field(s);
  if (text::is_null_literal(s)) return std::nullopt;
  return std::string(s);
}

std::optional<TurnId> parse_int(std::string_view s) {
  TurnId v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

struct Split {
  std::string_view head;                   // everything before the provenance field
  std::optional<std::string_view> bracket;  // contents of [...], if present
  bool head_has_separator = false;          // a comma sits between head and provenance
};

// Locates the provenance field at the end of a line.
std::optional<Split> split_provenance(std::string_view s) {
  s = text::trim(s);
  if (!s.empty() && s.back() == ']') {
    auto open = s.rfind('[');
    if (open == std::string_view::npos) return std::nullopt;
    Split out;
    out.bracket = s.substr(open + 1, s.size() - open - 2);
    out.head = text::trim(s.substr(0, open));
    if (!out.head.empty() && out.head.back() == ',') {
      out.head_has_separator = true;
      out.head = text::trim(out.head.substr(0, out.head.size() - 1));
    }
    return out;
  }
  auto comma = s.rfind(',');
  if (comma == std::string_view::npos) return std::nullopt;
  std::string_view tail = unwrap_field(s.substr(comma + 1));
  if (!text::is_null_literal(tail)) return std::nullopt;
  return Split{text::trim(s.substr(0, comma)), std::nullopt, true};
}

bool plausible_type_label(std::string_view label) {
  if (label.empty()) return false;
  if (parse_order_type(label)) return true;
  return std::none_of(label.begin(), label.end(),
                      [](unsigned char c) { return std::isspace(c) || c == '[' || c == ']'; });
}

void parse_bracket(std::string_view body, OrderLine& out) {
  Provenance ids;
  std::string buf(body);
  std::replace(buf.begin(), buf.end(), ',', ' ');
  for (const std::string& raw : text::split_whitespace(buf)) {
    std::string_view tok = unwrap_field(raw);
    if (tok.empty()) continue;
    if (auto id = parse_int(tok)) {
      ids.insert(*id);
    } else {
      out.non_integer_tokens.emplace_back(tok);
    }
  }
  out.order.provenance = std::move(ids);
}

bool starts_with_order_type(std::string_view line) {
  auto words = text::split_whitespace(line.substr(0, line.find(',')));
  return !words.empty() && parse_order_type(words.front()).has_value();
}

std::size_t count_fields(std::string_view head) {
  return static_cast<std::size_t>(std::count(head.begin(), head.end(), ',')) + 1;
}

}  // namespace

bool ParseOutcome::order_is_valid(std::size_t i) const {
  return i < violations.size() && violations[i].empty();
}

std::optional<OrderLine> parse_order_line(std::string_view line) {
  std::string_view s = strip_bullet(line);
  auto split = split_provenance(s);
  if (!split || !split->head_has_separator) return std::nullopt;

  const std::string_view head = split->head;
  const auto first = head.find(',');
  if (first == std::string_view::npos) return std::nullopt;
  const std::string_view rest = head.substr(first + 1);
  const auto last = rest.rfind(',');
  if (last == std::string_view::npos) return std::nullopt;

  std::string_view type = unwrap_field(head.substr(0, first));
  if (!plausible_type_label(type)) return std::nullopt;

  OrderLine out;
  out.order.order_type = standardize_order_type(type);
  out.order.description = optional_field(rest.substr(0, last));
  out.order.reason = optional_field(rest.substr(last + 1));
  if (split->bracket) parse_bracket(*split->bracket, out);
  return out;
}

std::optional<std::string> repair_line(std::string_view line) {
  std::string_view stripped = strip_bullet(line);
  if (parse_order_line(stripped)) return std::string(stripped);

  // Rule 1: a trailing "[...]" is the provenance whether or not a comma precedes it.
  auto split = split_provenance(stripped);
  if (!split) return std::nullopt;
  std::string head(split->head);
  const std::string provenance = split->bracket ? "[" + std::string(*split->bracket) + "]" : "null";

  // Rule 2: "followup return in 2 weeks, ..." -> "followup, return in 2 weeks, ..."
  {
    const auto comma = head.find(',');
    std::string_view first_field = text::trim(std::string_view(head).substr(0, comma));
    auto words = text::split_whitespace(first_field);
    if (words.size() > 1 && parse_order_type(words.front())) {
      std::string_view remainder = text::trim(first_field.substr(words.front().size()));
      std::string rebuilt = words.front() + ", " + std::string(remainder);
      if (comma != std::string::npos) rebuilt += head.substr(comma);
      head = std::move(rebuilt);
    }
  }

  // Rule 3: only type and description present.
  if (count_fields(head) == 2) head += ", null";

  std::string repaired = head + ", " + provenance;
  if (parse_order_line(repaired)) return repaired;
  return std::nullopt;
}

std::vector<Violation> validate_order(const MedicalOrder& order, const Encounter& encounter) {
  std::vector<Violation> out;
  if (!order.has_valid_type())
    out.push_back({"order_type", "must be one of {" + allowed_order_types_text() + "}",
                   "got \"" + order.order_type + "\""});
  if (!order.description || text::trim(*order.description).empty())
    out.push_back({"description", "must be non-empty", ""});
  if (order.provenance) {
    for (TurnId id : *order.provenance) {
      if (!encounter.has_turn(id))
        out.push_back({"provenance", "turn_id must be a turn of the encounter",
                       "unknown turn " + std::to_string(id)});
    }
  }
  return out;
}

ParseOutcome parse_output(std::string_view raw, const Encounter& encounter) {
  ParseOutcome outcome;
  for (std::string_view line : text::split_lines(raw)) {
    std::string_view cleaned = strip_bullet(line);
    if (cleaned.empty() || cleaned.starts_with("```")) continue;

    std::optional<OrderLine> parsed = parse_order_line(cleaned);
    if (!parsed) {
      if (auto fixed = repair_line(cleaned)) {
        parsed = parse_order_line(*fixed);
        if (parsed) ++outcome.repaired_count;
      }
    }
    if (!parsed) {
      outcome.discarded_lines.push_back(
          {std::string(line), starts_with_order_type(cleaned)
                                  ? "malformed order line, no repair rule applies"
                                  : "not an order line"});
      continue;
    }

    std::vector<Violation> violations = validate_order(parsed->order, encounter);
    for (const std::string& tok : parsed->non_integer_tokens)
      violations.push_back({"provenance", "must contain only integer turn ids", "token \"" + tok + "\""});
    if (parsed->order.provenance) {
      std::erase_if(*parsed->order.provenance, [&](TurnId id) { return !encounter.has_turn(id); });
    }
    outcome.orders.push_back(std::move(parsed->order));
    outcome.violations.push_back(std::move(violations));
  }
  return outcome;
}

ordered_json order_to_json(const MedicalOrder& o) {
  ordered_json j;
  j["order_type"] = o.order_type;
  j["description"] = o.description ? ordered_json(*o.description) : ordered_json(nullptr);
  j["reason"] = o.reason ? ordered_json(*o.reason) : ordered_json(nullptr);
  j["provenance"] = o.provenance ? ordered_json(*o.provenance) : ordered_json(nullptr);
  return j;
}

ordered_json predictions_to_json(std::span<const PredictionEntry> entries) {
  ordered_json doc = ordered_json::array();
  for (const auto& [id, orders] : entries) {
    ordered_json e;
    e["id"] = id;
    e["orders"] = ordered_json::array();
    for (const MedicalOrder& o : orders) e["orders"].push_back(order_to_json(o));
    doc.push_back(std::move(e));
  }
  return doc;
}

void serialize_predictions(std::span<const PredictionEntry> entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot write predictions: " + path.string());
  out << predictions_to_json(entries).dump(2) << '\n';
  out.flush();
  if (!out) throw PersistenceError("write failed: " + path.string());
}

void serialize_predictions(const std::map<std::string, ParseOutcome>& outcomes,
                           const std::filesystem::path& path) {
  std::vector<PredictionEntry> entries;
  entries.reserve(outcomes.size());
  for (const auto& [id, outcome] : outcomes) entries.emplace_back(id, outcome.orders);
  serialize_predictions(entries, path);
}

namespace {

[[noreturn]] void bad_entry(std::string_view source, std::size_t index, const std::string& what) {
  throw ValidationError(std::string(source) + ": prediction entry #" + std::to_string(index) + ": " + what);
}

std::optional<std::string> text_or_null(const json& o, const char* key, std::string_view source,
                                        std::size_t index) {
  auto it = o.find(key);
  if (it == o.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) bad_entry(source, index, std::string(key) + " must be a string or null");
  return it->get<std::string>();
}

}  // namespace

std::vector<PredictionEntry> parse_predictions(std::string_view json_text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ": malformed JSON at byte " + std::to_string(e.byte) +
                         ": " + e.what(),
                     e.byte);
  }
  if (!doc.is_array()) throw ValidationError(std::string(source) + ": top level must be an array");

  std::vector<PredictionEntry> entries;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& e = doc[i];
    if (!e.is_object()) bad_entry(source, i, "not an object");
    auto id = e.find("id");
    if (id == e.end() || !(id->is_string() || id->is_number_integer()))
      bad_entry(source, i, "missing \"id\"");
    PredictionEntry entry;
    entry.first = id->is_string() ? id->get<std::string>() : std::to_string(id->get<long long>());

    auto orders = e.find("orders");
    if (orders == e.end()) orders = e.find("expected_orders");
    if (orders == e.end() || !orders->is_array()) bad_entry(source, i, "missing \"orders\" array");
    for (const json& o : *orders) {
      if (!o.is_object()) bad_entry(source, i, "order is not an object");
      MedicalOrder order;
      auto type = o.find("order_type");
      if (type != o.end() && type->is_string()) {
        order.order_type = type->get<std::string>();
      } else if (type != o.end() && !type->is_null()) {
        bad_entry(source, i, "order_type must be a string");
      }
      order.description = text_or_null(o, "description", source, i);
      order.reason = text_or_null(o, "reason", source, i);
      auto prov = o.find("provenance");
      if (prov != o.end() && !prov->is_null()) {
        if (!prov->is_array()) bad_entry(source, i, "provenance must be a list of integers or null");
        Provenance ids;
        for (const json& v : *prov) {
          if (v.is_number_integer()) {
            ids.insert(v.get<TurnId>());
          } else if (auto parsed = v.is_string() ? parse_int(text::trim(v.get_ref<const std::string&>()))
                                                 : std::nullopt) {
            ids.insert(*parsed);
          } else {
            bad_entry(source, i, "provenance entry is not an integer: " + v.dump());
          }
        }
        order.provenance = std::move(ids);
      }
      entry.second.push_back(std::move(order));
    }
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<PredictionEntry> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open predictions file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_predictions(buf.str(), path.string());
}

}  // namespace medorder
