// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations and fixture helpers shared by the
// unit tests and the acceptance runner. Nothing here calls into the library's
// metric code.
#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "medorder/types.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(MEDORDER_TEST_DATA_DIR); }
inline fs::path data(const std::string& name) { return data_dir() / name; }

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = fs::temp_directory_path() / ("medorder-" + tag + "-" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// An ephemeral port that was bound once and released, so nothing listens on it.
inline int closed_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

// ---- oracles ---------------------------------------------------------------

// Character-level normalization: drop . , ; : ! ? ' " ( ), lowercase,
// collapse ASCII whitespace runs, trim.
inline std::string oracle_normalize(const std::string& s) {
  const std::string drop = ".,;:!?'\"()";
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (drop.find(c) != std::string::npos) continue;
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

inline std::vector<std::string> oracle_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(oracle_normalize(s));
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

// Clipped unigram overlap counted per distinct candidate token; F1 as
// 2 * overlap / (|c| + |r|), which equals 2PR / (P + R).
inline double oracle_rouge1(const std::string& candidate, const std::string& reference) {
  const auto c = oracle_tokens(candidate);
  const auto r = oracle_tokens(reference);
  if (c.empty() && r.empty()) return 1.0;
  if (c.empty() || r.empty()) return 0.0;
  std::vector<std::string> seen;
  long overlap = 0;
  for (const auto& t : c) {
    if (std::find(seen.begin(), seen.end(), t) != seen.end()) continue;
    seen.push_back(t);
    overlap += std::min(std::count(c.begin(), c.end(), t), std::count(r.begin(), r.end(), t));
  }
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(c.size() + r.size());
}

inline double oracle_set_f1(const std::vector<int>& pred, const std::vector<int>& gold) {
  std::vector<int> p, g;
  for (int x : pred)
    if (std::find(p.begin(), p.end(), x) == p.end()) p.push_back(x);
  for (int x : gold)
    if (std::find(g.begin(), g.end(), x) == g.end()) g.push_back(x);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  long common = 0;
  for (int x : p)
    for (int y : g) common += x == y ? 1 : 0;
  return 2.0 * static_cast<double>(common) / static_cast<double>(p.size() + g.size());
}

// Best total over every partial one-to-one assignment of rows to columns,
// counting only positive entries.
inline double oracle_best_total(const std::vector<std::vector<double>>& sim) {
  const std::size_t rows = sim.size();
  const std::size_t cols = rows == 0 ? 0 : sim[0].size();
  std::vector<bool> used(cols, false);
  double best = 0.0;
  auto rec = [&](auto&& self, std::size_t r, double total) -> void {
    if (r == rows) {
      best = std::max(best, total);
      return;
    }
    self(self, r + 1, total);
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c] || sim[r][c] <= 0.0) continue;
      used[c] = true;
      self(self, r + 1, total + sim[r][c]);
      used[c] = false;
    }
  };
  rec(rec, 0, 0.0);
  return best;
}

// ---- generators ------------------------------------------------------------

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "blood", "work",   "cbc",      "x-ray", "mri",     "spine",  "chest",  "lisinopril",
      "10",    "mg",     "daily",    "two",   "weeks",   "return", "lab",    "panel",
      "b/p",   "knee",   "left",     "pain",  "follow-up", "check", "white", "cells",
      "the",   "of",     "for",      "in",    "a1c",     "urine",  "scan",   "ct"};
  return words;
}

inline std::string random_phrase(std::mt19937_64& rng, int min_words, int max_words) {
  std::uniform_int_distribution<int> len(min_words, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, vocabulary().size() - 1);
  const int n = len(rng);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += vocabulary()[pick(rng)];
  }
  return out;
}

// Noisy text for metric fuzzing: words, punctuation, case changes, spacing.
inline std::string random_noisy_text(std::mt19937_64& rng) {
  static const std::vector<std::string> extra = {"Blood", "CBC.", "(x-ray)", "pain,", "\"mri\"",
                                                 "weeks;", "B/P", "!", "", "  ", "Two?"};
  std::uniform_int_distribution<int> len(0, 7);
  std::uniform_int_distribution<int> coin(0, 3);
  std::uniform_int_distribution<std::size_t> pick_v(0, vocabulary().size() - 1);
  std::uniform_int_distribution<std::size_t> pick_e(0, extra.size() - 1);
  const int n = len(rng);
  std::string out;
  for (int i = 0; i < n; ++i) {
    out += coin(rng) == 0 ? "  " : " ";
    out += coin(rng) == 0 ? extra[pick_e(rng)] : vocabulary()[pick_v(rng)];
  }
  return out;
}

inline std::vector<int> random_ids(std::mt19937_64& rng, int max_id, int max_count) {
  std::uniform_int_distribution<int> count(0, max_count);
  std::uniform_int_distribution<int> id(1, max_id);
  std::vector<int> out(static_cast<std::size_t>(count(rng)));
  for (int& x : out) x = id(rng);
  return out;
}

inline medorder::Encounter random_transcript(std::mt19937_64& rng, const std::string& id, int turns) {
  medorder::Encounter e;
  e.id = id;
  for (int k = 1; k <= turns; ++k) {
    e.turns.push_back({k, k % 2 ? medorder::Speaker::Patient : medorder::Speaker::Doctor,
                       random_phrase(rng, 1, 8)});
  }
  return e;
}

// A valid gold order: known type, non-empty description without brackets,
// reason without commas (or absent), provenance a non-empty subset of the
// turn ids (or absent).
inline medorder::MedicalOrder random_valid_order(std::mt19937_64& rng, int turns, bool allow_commas) {
  static const char* kTypes[] = {"medication", "lab", "imaging", "followup"};
  std::uniform_int_distribution<int> type(0, 3);
  std::uniform_int_distribution<int> coin(0, 3);
  medorder::MedicalOrder o;
  o.order_type = kTypes[type(rng)];
  std::string desc = random_phrase(rng, 1, 6);
  if (allow_commas && coin(rng) == 0) desc += ", " + random_phrase(rng, 1, 3);
  o.description = desc;
  if (coin(rng) != 0) o.reason = random_phrase(rng, 1, 5);
  if (coin(rng) != 0) {
    medorder::Provenance p;
    for (int id : random_ids(rng, turns, 3)) p.insert(id);
    if (p.empty()) p.insert(1);
    o.provenance = p;
  }
  return o;
}

inline medorder::Encounter random_gold_encounter(std::mt19937_64& rng, const std::string& id,
                                                 bool allow_commas = true) {
  std::uniform_int_distribution<int> turns(3, 40);
  std::uniform_int_distribution<int> orders(0, 6);
  medorder::Encounter e = random_transcript(rng, id, turns(rng));
  const int n_turns = static_cast<int>(e.turns.size());
  e.gold_orders.emplace();
  const int n = orders(rng);
  for (int i = 0; i < n; ++i) e.gold_orders->push_back(random_valid_order(rng, n_turns, allow_commas));
  return e;
}

}  // namespace testsupport
