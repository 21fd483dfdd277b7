// SPDX-License-Identifier: Apache-2.0
#include "medorder/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "medorder/errors.hpp"
#include "medorder/text.hpp"

namespace medorder {

using nlohmann::json;

namespace {

constexpr std::string_view kTurnTextKeys[] = {"transcript", "utterance"};
constexpr std::string_view kOrderListKeys[] = {"expected_orders", "orders"};

[[noreturn]] void fail(std::string_view source, std::string_view encounter_id,
                       const std::string& what) {
  std::string msg(source);
  msg += ": encounter '";
  msg += encounter_id;
  msg += "': ";
  msg += what;
  throw ValidationError(msg);
}

const json* find_alias(const json& object, std::span<const std::string_view> keys) {
  for (std::string_view key : keys) {
    auto it = object.find(std::string(key));
    if (it != object.end()) return &*it;
  }
  return nullptr;
}

std::optional<TurnId> to_turn_id(const json& value) {
  if (value.is_number_integer()) {
    auto v = value.get<long long>();
    if (v < std::numeric_limits<TurnId>::min() || v > std::numeric_limits<TurnId>::max())
      return std::nullopt;
    return static_cast<TurnId>(v);
  }
  if (value.is_string()) {
    std::string_view s = text::trim(value.get_ref<const std::string&>());
    TurnId id = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
    if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return id;
  }
  return std::nullopt;
}

std::optional<Provenance> read_provenance(const json& value, std::string_view source,
                                          std::string_view enc_id, const std::string& where) {
  if (value.is_null()) return std::nullopt;
  Provenance ids;
  if (value.is_array()) {
    for (const json& item : value) {
      auto id = to_turn_id(item);
      if (!id) fail(source, enc_id, where + ": provenance entry is not an integer: " + item.dump());
      ids.insert(*id);
    }
    return ids;
  }
  if (value.is_string()) {
    std::string s = value.get<std::string>();
    std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '[' || c == ']'; }, ' ');
    for (const std::string& tok : text::split_whitespace(s)) {
      auto id = to_turn_id(json(tok));
      if (!id) fail(source, enc_id, where + ": provenance token is not an integer: " + tok);
      ids.insert(*id);
    }
    return ids;
  }
  fail(source, enc_id, where + ": provenance must be a list of integers, a string or null");
}

std::optional<std::string> read_optional_text(const json& object, const char* key,
                                              std::string_view source, std::string_view enc_id,
                                              const std::string& where) {
  auto it = object.find(key);
  if (it == object.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) fail(source, enc_id, where + "." + key + " must be a string or null");
  return it->get<std::string>();
}

MedicalOrder read_order(const json& item, std::string_view source, std::string_view enc_id,
                        const std::string& where) {
  if (!item.is_object()) fail(source, enc_id, where + " is not an object");
  MedicalOrder order;
  auto type = item.find("order_type");
  if (type == item.end() || !type->is_string())
    fail(source, enc_id, where + ".order_type is missing or not a string");
  order.order_type = type->get<std::string>();
  order.description = read_optional_text(item, "description", source, enc_id, where);
  order.reason = read_optional_text(item, "reason", source, enc_id, where);
  auto prov = item.find("provenance");
  if (prov != item.end()) order.provenance = read_provenance(*prov, source, enc_id, where);
  return order;
}

Encounter read_encounter(const json& item, std::size_t index, CorpusRole role,
                         std::string_view source) {
  std::string fallback_id = "#" + std::to_string(index);
  if (!item.is_object()) fail(source, fallback_id, "entry is not an object");

  Encounter enc;
  auto id = item.find("id");
  if (id == item.end()) fail(source, fallback_id, "missing \"id\"");
  if (id->is_string()) {
    enc.id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    enc.id = std::to_string(id->get<long long>());
  } else {
    fail(source, fallback_id, "\"id\" must be a string");
  }

  auto transcript = item.find("transcript");
  if (transcript == item.end() || !transcript->is_array())
    fail(source, enc.id, "missing \"transcript\" array");
  for (std::size_t i = 0; i < transcript->size(); ++i) {
    const json& t = (*transcript)[i];
    std::string where = "transcript[" + std::to_string(i) + "]";
    if (!t.is_object()) fail(source, enc.id, where + " is not an object");
    Turn turn;
    auto tid = t.find("turn_id");
    auto parsed_id = tid == t.end() ? std::nullopt : to_turn_id(*tid);
    if (!parsed_id) fail(source, enc.id, where + ".turn_id is missing or not an integer");
    turn.turn_id = *parsed_id;

    auto speaker = t.find("speaker");
    if (speaker == t.end() || !speaker->is_string())
      fail(source, enc.id, where + ".speaker is missing");
    auto sp = parse_speaker(speaker->get_ref<const std::string&>());
    if (!sp)
      fail(source, enc.id,
           where + ".speaker must be DOCTOR or PATIENT, got \"" + speaker->get<std::string>() + "\"");
    turn.speaker = *sp;

    const json* utter = find_alias(t, kTurnTextKeys);
    if (utter == nullptr || !utter->is_string())
      fail(source, enc.id, where + " has no utterance text (\"transcript\" or \"utterance\")");
    turn.utterance = utter->get<std::string>();
    enc.turns.push_back(std::move(turn));
  }

  if (role == CorpusRole::WithGold) {
    const json* orders = find_alias(item, kOrderListKeys);
    if (orders == nullptr || !orders->is_array())
      fail(source, enc.id, "missing \"expected_orders\" array");
    std::vector<MedicalOrder> gold;
    for (std::size_t j = 0; j < orders->size(); ++j)
      gold.push_back(read_order((*orders)[j], source, enc.id,
                                "expected_orders[" + std::to_string(j) + "]"));
    enc.gold_orders = std::move(gold);
  }
  return enc;
}

}  // namespace

std::vector<Encounter> parse_corpus(std::string_view json_text, CorpusRole role,
                                    std::string_view source) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ": malformed JSON at byte " + std::to_string(e.byte) +
                         ": " + e.what(),
                     e.byte);
  }
  if (!doc.is_array())
    throw ValidationError(std::string(source) + ": top level must be an array of encounters");

  std::vector<Encounter> corpus;
  corpus.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    Encounter enc = read_encounter(doc[i], i, role, source);
    auto violations = validate_encounter(enc);
    if (!violations.empty()) {
      std::ostringstream msg;
      for (std::size_t k = 0; k < violations.size(); ++k) msg << (k ? "; " : "") << violations[k];
      fail(source, enc.id, msg.str());
    }
    corpus.push_back(std::move(enc));
  }
  return corpus;
}

std::vector<Encounter> load_corpus(const std::filesystem::path& path, CorpusRole role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open corpus file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), role, path.string());
}

nlohmann::ordered_json corpus_to_json(std::span<const Encounter> corpus) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const Encounter& enc : corpus) {
    nlohmann::ordered_json e;
    e["id"] = enc.id;
    e["transcript"] = nlohmann::ordered_json::array();
    for (const Turn& t : enc.turns) {
      e["transcript"].push_back(
          {{"turn_id", t.turn_id}, {"speaker", to_string(t.speaker)}, {"transcript", t.utterance}});
    }
    if (enc.gold_orders) {
      e["expected_orders"] = nlohmann::ordered_json::array();
      for (const MedicalOrder& o : *enc.gold_orders) {
        nlohmann::ordered_json order;
        order["order_type"] = o.order_type;
        order["description"] = o.description ? nlohmann::ordered_json(*o.description) : nullptr;
        order["reason"] = o.reason ? nlohmann::ordered_json(*o.reason) : nullptr;
        order["provenance"] = o.provenance ? nlohmann::ordered_json(*o.provenance) : nullptr;
        e["expected_orders"].push_back(std::move(order));
      }
    }
    doc.push_back(std::move(e));
  }
  return doc;
}

void save_corpus(std::span<const Encounter> corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot write corpus file: " + path.string());
  out << corpus_to_json(corpus).dump(2) << '\n';
  if (!out) throw PersistenceError("write failed: " + path.string());
}

std::vector<Violation> validate_encounter(const Encounter& enc) {
  std::vector<Violation> out;
  if (enc.id.empty()) out.push_back({"id", "must be non-empty", ""});
  if (enc.turns.empty()) out.push_back({"transcript", "must contain at least one turn", ""});

  std::set<TurnId> seen;
  std::optional<TurnId> previous;
  for (std::size_t i = 0; i < enc.turns.size(); ++i) {
    const TurnId id = enc.turns[i].turn_id;
    const std::string field = "transcript[" + std::to_string(i) + "].turn_id";
    if (id < 0) out.push_back({field, "turn_id must be non-negative", std::to_string(id)});
    if (!seen.insert(id).second) {
      out.push_back({field, "turn_id must be unique", "duplicate " + std::to_string(id)});
    } else if (previous && id < *previous) {
      out.push_back({field, "turn_id must be strictly increasing",
                     std::to_string(id) + " after " + std::to_string(*previous)});
    }
    previous = id;
  }

  const auto& gold = enc.gold_or_empty();
  for (std::size_t j = 0; j < gold.size(); ++j) {
    const MedicalOrder& o = gold[j];
    const std::string base = "expected_orders[" + std::to_string(j) + "]";
    if (!o.has_valid_type())
      out.push_back({base + ".order_type", "must be one of {" + allowed_order_types_text() + "}",
                     "got \"" + o.order_type + "\""});
    if (!o.description || text::trim(*o.description).empty())
      out.push_back({base + ".description", "must be non-empty", ""});
    if (o.provenance) {
      for (TurnId id : *o.provenance) {
        if (!seen.contains(id))
          out.push_back({base + ".provenance", "turn_id must reference a transcript turn",
                         "unknown turn " + std::to_string(id)});
      }
    }
  }
  return out;
}

std::size_t CorpusStats::total_orders() const {
  std::size_t n = 0;
  for (const auto& [type, count] : orders_by_type) n += count;
  return n;
}

CorpusStats corpus_stats(std::span<const Encounter> corpus) {
  if (corpus.empty()) throw DomainError("corpus statistics need at least one encounter");

  CorpusStats s;
  s.encounter_count = corpus.size();
  for (OrderType t : kOrderTypes) s.orders_by_type[t] = 0;
  s.turns_by_speaker = {{Speaker::Doctor, 0}, {Speaker::Patient, 0}};
  s.tokens_by_speaker = s.turns_by_speaker;

  std::size_t total_turns = 0;
  std::size_t gold_orders = 0;
  std::size_t missing_reason = 0;
  std::size_t with_provenance = 0;
  std::size_t provenance_ids = 0;
  for (const Encounter& enc : corpus) {
    total_turns += enc.turns.size();
    s.max_turns = std::max(s.max_turns, enc.turns.size());
    for (const Turn& t : enc.turns) {
      ++s.turns_by_speaker[t.speaker];
      s.tokens_by_speaker[t.speaker] += text::split_whitespace(t.utterance).size();
    }
    for (const MedicalOrder& o : enc.gold_or_empty()) {
      ++gold_orders;
      if (auto type = o.known_type()) ++s.orders_by_type[*type];
      if (!o.reason || text::trim(*o.reason).empty()) ++missing_reason;
      if (o.provenance) {
        ++with_provenance;
        provenance_ids += o.provenance->size();
      }
    }
  }
  s.mean_turns = static_cast<double>(total_turns) / static_cast<double>(corpus.size());
  if (gold_orders > 0)
    s.missing_reason_fraction = static_cast<double>(missing_reason) / static_cast<double>(gold_orders);
  if (with_provenance > 0)
    s.mean_provenance_span =
        static_cast<double>(provenance_ids) / static_cast<double>(with_provenance);
  return s;
}

nlohmann::ordered_json stats_to_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["encounter_count"] = s.encounter_count;
  j["orders_by_type"] = nlohmann::ordered_json::object();
  for (OrderType t : {OrderType::Followup, OrderType::Imaging, OrderType::Lab, OrderType::Medication})
    j["orders_by_type"][std::string(to_string(t))] = s.orders_by_type.at(t);
  j["total_orders"] = s.total_orders();
  j["mean_turns"] = s.mean_turns;
  j["max_turns"] = s.max_turns;
  for (const char* key : {"turns_by_speaker", "tokens_by_speaker"}) {
    const auto& m = std::string_view(key) == "turns_by_speaker" ? s.turns_by_speaker : s.tokens_by_speaker;
    j[key] = {{"DOCTOR", m.at(Speaker::Doctor)}, {"PATIENT", m.at(Speaker::Patient)}};
  }
  j["missing_reason_fraction"] = s.missing_reason_fraction;
  j["mean_provenance_span"] = s.mean_provenance_span;
  return j;
}

std::string format_stats_table(const CorpusStats& s, std::string_view split_label) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "Set" << std::right << std::setw(6) << "#Enc"
      << std::setw(11) << "Follow-Up" << std::setw(9) << "Imaging" << std::setw(6) << "Lab"
      << std::setw(12) << "Medication" << '\n';
  out << std::left << std::setw(12) << split_label << std::right << std::setw(6)
      << s.encounter_count << std::setw(11) << s.orders_by_type.at(OrderType::Followup)
      << std::setw(9) << s.orders_by_type.at(OrderType::Imaging) << std::setw(6)
      << s.orders_by_type.at(OrderType::Lab) << std::setw(12)
      << s.orders_by_type.at(OrderType::Medication) << "\n\n";
  out << std::fixed << std::setprecision(1);
  out << "turns per encounter: mean " << s.mean_turns << ", max " << s.max_turns << '\n';
  out << "DOCTOR:  " << s.turns_by_speaker.at(Speaker::Doctor) << " turns, "
      << s.tokens_by_speaker.at(Speaker::Doctor) << " tokens\n";
  out << "PATIENT: " << s.turns_by_speaker.at(Speaker::Patient) << " turns, "
      << s.tokens_by_speaker.at(Speaker::Patient) << " tokens\n";
  out << std::setprecision(3);
  out << "orders missing a reason: " << s.missing_reason_fraction
      << ", mean provenance span: " << s.mean_provenance_span << " turns\n";
  return out.str();
}

}  // namespace medorder
