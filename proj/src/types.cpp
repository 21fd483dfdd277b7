// SPDX-License-Identifier: Apache-2.0
#include "medorder/types.hpp"

#include <algorithm>

#include "medorder/text.hpp"

namespace medorder {

std::string_view to_string(Speaker speaker) {
  return speaker == Speaker::Doctor ? "DOCTOR" : "PATIENT";
}

std::string_view to_string(OrderType type) {
  switch (type) {
    case OrderType::Medication: return "medication";
    case OrderType::Lab: return "lab";
    case OrderType::Imaging: return "imaging";
    case OrderType::Followup: return "followup";
  }
  return "";
}

std::optional<Speaker> parse_speaker(std::string_view label) {
  label = text::trim(label);
  if (text::iequals(label, "doctor")) return Speaker::Doctor;
  if (text::iequals(label, "patient")) return Speaker::Patient;
  return std::nullopt;
}

std::optional<OrderType> parse_order_type(std::string_view label) {
  std::string key;
  for (char c : text::to_lower(text::trim(label))) {
    if (c == '-' || c == '_' || c == ' ' || c == '"' || c == '\'' || c == '*' || c == '`') continue;
    key.push_back(c);
  }
  if (key == "medication" || key == "medications") return OrderType::Medication;
  if (key == "lab" || key == "labs" || key == "laboratory") return OrderType::Lab;
  if (key == "imaging") return OrderType::Imaging;
  if (key == "followup" || key == "followups") return OrderType::Followup;
  return std::nullopt;
}

std::string standardize_order_type(std::string_view label) {
  if (auto type = parse_order_type(label)) return std::string(to_string(*type));
  return text::to_lower(text::trim(label));
}

std::string allowed_order_types_text() {
  std::string out;
  for (OrderType t : kOrderTypes) {
    if (!out.empty()) out += ", ";
    out += to_string(t);
  }
  return out;
}

std::ostream& operator<<(std::ostream& os, const MedicalOrder& order) {
  os << "(" << order.order_type << ", " << order.description.value_or("<null>") << ", "
     << order.reason.value_or("<null>") << ", ";
  if (!order.provenance) {
    os << "<null>";
  } else {
    os << "{";
    bool first = true;
    for (TurnId id : *order.provenance) {
      os << (first ? "" : ",") << id;
      first = false;
    }
    os << "}";
  }
  return os << ")";
}

const std::vector<MedicalOrder>& Encounter::gold_or_empty() const {
  static const std::vector<MedicalOrder> kEmpty;
  return gold_orders ? *gold_orders : kEmpty;
}

bool Encounter::has_turn(TurnId id) const {
  // turns are validated to be increasing, but don't rely on it here
  return std::any_of(turns.begin(), turns.end(), [id](const Turn& t) { return t.turn_id == id; });
}

std::ostream& operator<<(std::ostream& os, const Violation& v) {
  return os << v.field << ": " << v.rule << (v.detail.empty() ? "" : " (" + v.detail + ")");
}

}  // namespace medorder
