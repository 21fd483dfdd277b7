// SPDX-License-Identifier: Apache-2.0
#include "medorder/text.hpp"

#include <algorithm>
#include <cctype>

namespace medorder::text {

namespace {
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Byte length of the whitespace code point starting at s[i], or 0.
std::size_t whitespace_len(std::string_view s, std::size_t i) {
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  if (is_space(s[i])) return 1;
  std::size_t rest = s.size() - i;
  if (rest >= 2 && byte(i) == 0xC2 && (byte(i + 1) == 0x85 || byte(i + 1) == 0xA0)) return 2;
  if (rest >= 3) {
    unsigned b0 = byte(i), b1 = byte(i + 1), b2 = byte(i + 2);
    if (b0 == 0xE1 && b1 == 0x9A && b2 == 0x80) return 3;                 // U+1680
    if (b0 == 0xE2 && b1 == 0x80 && (b2 <= 0x8A || b2 == 0xA8 || b2 == 0xA9 || b2 == 0xAF))
      return 3;                                                           // U+2000..200A, 2028, 2029, 202F
    if (b0 == 0xE2 && b1 == 0x81 && b2 == 0x9F) return 3;                 // U+205F
    if (b0 == 0xE3 && b1 == 0x80 && b2 == 0x80) return 3;                 // U+3000
  }
  return 0;
}
}  // namespace

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  std::size_t start = 0;
  while (i < s.size()) {
    if (std::size_t n = whitespace_len(s, i)) {
      if (i > start) tokens.emplace_back(s.substr(start, i - start));
      i += n;
      start = i;
    } else {
      ++i;
    }
  }
  if (s.size() > start) tokens.emplace_back(s.substr(start));
  return tokens;
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    std::string_view line = s.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

bool is_null_literal(std::string_view s) {
  s = trim(s);
  return s.empty() || iequals(s, "null") || iequals(s, "none");
}

}  // namespace medorder::text
