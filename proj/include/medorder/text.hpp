// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace medorder::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

// Splits on runs of whitespace; never yields empty tokens.
std::vector<std::string> split_whitespace(std::string_view s);

std::vector<std::string_view> split_lines(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

// "null", "none" (any case) or blank.
bool is_null_literal(std::string_view s);

}  // namespace medorder::text
