// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace medorder {

enum class Speaker { Doctor, Patient };

enum class OrderType { Medication, Lab, Imaging, Followup };

inline constexpr std::array<OrderType, 4> kOrderTypes = {
    OrderType::Medication, OrderType::Lab, OrderType::Imaging, OrderType::Followup};

std::string_view to_string(Speaker speaker);
std::string_view to_string(OrderType type);

// Case-insensitive; only "doctor" and "patient" are accepted.
std::optional<Speaker> parse_speaker(std::string_view label);

// Maps a free-form label onto the four allowed types. Accepts case and
// separator variants ("Follow-up", "follow up") and simple plurals.
std::optional<OrderType> parse_order_type(std::string_view label);

// Canonical spelling for known types, the trimmed lowercase literal otherwise.
std::string standardize_order_type(std::string_view label);

// Comma-separated list of the allowed labels, for messages and prompts.
std::string allowed_order_types_text();

using TurnId = int;
using Provenance = std::set<TurnId>;

struct Turn {
  TurnId turn_id = 0;
  Speaker speaker = Speaker::Doctor;
  std::string utterance;

  friend bool operator==(const Turn&, const Turn&) = default;
};

// One extracted or annotated order. `order_type` holds the label as written;
// it is a valid type only when parse_order_type() accepts it.
struct MedicalOrder {
  std::string order_type;
  std::optional<std::string> description;
  std::optional<std::string> reason;
  std::optional<Provenance> provenance;

  std::optional<OrderType> known_type() const { return parse_order_type(order_type); }
  bool has_valid_type() const { return known_type().has_value(); }

  friend bool operator==(const MedicalOrder&, const MedicalOrder&) = default;
};

std::ostream& operator<<(std::ostream& os, const MedicalOrder& order);

struct Encounter {
  std::string id;
  std::vector<Turn> turns;
  std::optional<std::vector<MedicalOrder>> gold_orders;

  const std::vector<MedicalOrder>& gold_or_empty() const;
  bool has_turn(TurnId id) const;

  friend bool operator==(const Encounter&, const Encounter&) = default;
};

// A broken rule. `field` is a dotted path such as "transcript[3].turn_id".
struct Violation {
  std::string field;
  std::string rule;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

std::ostream& operator<<(std::ostream& os, const Violation& violation);

}  // namespace medorder
