// SPDX-License-Identifier: Apache-2.0
#include "medorder/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "medorder/audit.hpp"
#include "medorder/concurrency.hpp"
#include "medorder/corpus.hpp"
#include "medorder/errors.hpp"
#include "medorder/parser.hpp"
#include "medorder/scorer.hpp"

namespace medorder::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kVersion = "0.1.0";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PersistenceError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw PersistenceError("write failed: " + path.string());
}

void require_file(const fs::path& path, std::string_view what) {
  if (path.empty()) throw LookupError(std::string("no ") + std::string(what) + " file given");
  if (!fs::is_regular_file(path)) throw LookupError(std::string(what) + " file not found: " + path.string());
}

// Gold-bearing files have an order list on every encounter.
CorpusRole detect_role(const std::string& json_text) {
  try {
    auto doc = nlohmann::json::parse(json_text);
    if (!doc.is_array() || doc.empty()) return CorpusRole::TranscriptsOnly;
    for (const auto& e : doc) {
      if (!e.is_object() || !(e.contains("expected_orders") || e.contains("orders")))
        return CorpusRole::TranscriptsOnly;
    }
    return CorpusRole::WithGold;
  } catch (const nlohmann::json::exception&) {
    return CorpusRole::TranscriptsOnly;  // parse_corpus reports the error with its offset
  }
}

std::vector<Encounter> load_any_corpus(const fs::path& path) {
  require_file(path, "corpus");
  const std::string content = read_file(path);
  return parse_corpus(content, detect_role(content), path.string());
}

fs::path target_corpus(const RunConfig& cfg) {
  if (!cfg.corpus.empty()) return cfg.corpus;
  throw LookupError("no corpus given (use --corpus or --split with train/dev/test paths)");
}

std::string utc_timestamp(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Mock and replay runs are stamped reproducibly: SOURCE_DATE_EPOCH when set,
// else the newest modification time among the run's inputs.
std::string manifest_timestamp(const RunConfig& cfg, const std::vector<fs::path>& inputs) {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0')
    return utc_timestamp(static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10)));
  if (cfg.backend.kind == BackendKind::Endpoint)
    return utc_timestamp(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now()));
  std::time_t newest = 0;
  for (const fs::path& p : inputs) {
    std::error_code ec;
    if (p.empty()) continue;
    auto mtime = fs::last_write_time(p, ec);
    if (ec) continue;
    auto sys = fs::file_time_type::clock::to_sys(mtime);
    newest = std::max(newest, std::chrono::system_clock::to_time_t(sys));
  }
  return utc_timestamp(newest);
}

void ensure_out_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw PersistenceError("cannot create output directory " + dir.string() + ": " + ec.message());
}

struct EncounterRun {
  std::string id;
  std::optional<ParseOutcome> outcome;
  std::string error;
  std::size_t dropped_turns = 0;
  std::optional<std::string> exemplar_id;
};

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

int cmd_stats(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const fs::path path = target_corpus(cfg);
  const auto corpus = load_any_corpus(path);
  const CorpusStats stats = corpus_stats(corpus);
  const ordered_json j = stats_to_json(stats);
  if (cfg.json_only) {
    out << j.dump(2) << '\n';
  } else {
    out << format_stats_table(stats, path.stem().string()) << '\n' << j.dump(2) << '\n';
  }
  if (!cfg.out_dir.empty()) {
    ensure_out_dir(cfg.out_dir);
    write_file(cfg.out_dir / "stats.json", j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_extract(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.decode.validate();
  cfg.backend.validate();
  if (cfg.jobs < 1) throw std::invalid_argument("--jobs must be at least 1");
  if (cfg.out_dir.empty()) throw LookupError("extract needs an output directory (--out)");

  const fs::path corpus_path = target_corpus(cfg);
  const auto corpus = load_any_corpus(corpus_path);

  PromptConfig prompt = cfg.prompt;
  if (!cfg.system_prompt.empty()) prompt.system_instruction = load_system_instruction(cfg.system_prompt);
  prompt.token_budget = cfg.token_budget.value_or(cfg.decode.max_context_tokens - cfg.decode.max_new_tokens);

  const fs::path exemplar_path = cfg.train.empty() ? corpus_path : cfg.train;
  std::vector<Encounter> exemplar_pool;
  std::optional<Exemplar> default_exemplar;
  if (prompt.shot_mode == ShotMode::Few) {
    exemplar_pool = exemplar_path == corpus_path ? corpus : load_any_corpus(exemplar_path);
    default_exemplar = select_exemplar(exemplar_pool, prompt.exemplar_encounter_id);
  }

  auto client = make_client(cfg.backend, corpus);
  if (!cfg.record.empty() && cfg.backend.kind == BackendKind::Replay)
    throw std::invalid_argument("--record cannot be combined with the replay backend");

  auto run_one = [&](std::size_t i) {
    const Encounter& enc = corpus[i];
    EncounterRun r;
    r.id = enc.id;
    try {
      const Exemplar* exemplar = nullptr;
      std::optional<Exemplar> alternate;
      if (default_exemplar) {
        exemplar = &*default_exemplar;
        // the automatic pick must never be the encounter being extracted
        if (!prompt.exemplar_encounter_id && exemplar->encounter.id == enc.id) {
          const std::string self[] = {enc.id};
          alternate = select_exemplar(exemplar_pool, std::nullopt, self);
          exemplar = &*alternate;
        }
        r.exemplar_id = exemplar->encounter.id;
      }
      const PromptBundle bundle = build_prompt(enc, prompt, exemplar);
      r.dropped_turns = bundle.dropped_turns;
      const Completion completion = client->complete(bundle, cfg.decode);
      if (!cfg.record.empty()) record_replay(enc.id, completion.text, cfg.record);
      r.outcome = parse_output(completion.text, enc);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  };
  std::vector<EncounterRun> runs = run_bounded(corpus.size(), cfg.jobs, run_one);
  std::sort(runs.begin(), runs.end(), [](const EncounterRun& a, const EncounterRun& b) { return a.id < b.id; });

  std::vector<PredictionEntry> predictions;
  ordered_json encounters = ordered_json::array();
  std::size_t failed = 0, total_orders = 0;
  for (const EncounterRun& r : runs) {
    predictions.emplace_back(r.id, r.outcome ? r.outcome->orders : std::vector<MedicalOrder>{});
    ordered_json e;
    e["id"] = r.id;
    if (r.outcome) {
      std::size_t violations = 0;
      for (const auto& v : r.outcome->violations) violations += v.empty() ? 0 : 1;
      e["status"] = "ok";
      e["orders"] = r.outcome->orders.size();
      e["repaired_lines"] = r.outcome->repaired_count;
      e["discarded_lines"] = r.outcome->discarded_lines.size();
      e["orders_with_violations"] = violations;
      total_orders += r.outcome->orders.size();
    } else {
      ++failed;
      e["status"] = "failed";
      e["error"] = r.error;
      err << "error: encounter " << r.id << ": " << r.error << '\n';
    }
    if (r.exemplar_id) e["exemplar_id"] = *r.exemplar_id;
    if (r.dropped_turns > 0) e["dropped_turns"] = r.dropped_turns;
    encounters.push_back(std::move(e));
  }

  ensure_out_dir(cfg.out_dir);
  const fs::path predictions_path = cfg.out_dir / "predictions.json";
  serialize_predictions(predictions, predictions_path);

  const std::string instruction = prompt.system_instruction;
  ordered_json manifest;
  manifest["tool"] = "medorder";
  manifest["version"] = kVersion;
  manifest["created_at"] =
      manifest_timestamp(cfg, {corpus_path, exemplar_path, cfg.backend.replay_path, cfg.system_prompt});
  manifest["corpus"] = {{"path", corpus_path.string()}, {"sha256", sha256_hex(read_file(corpus_path))}};
  manifest["backend"] = {{"kind", to_string(cfg.backend.kind)},
                         {"model_name", cfg.backend.model_name},
                         {"endpoint_url", cfg.backend.endpoint_url},
                         {"replay_path", cfg.backend.replay_path.string()},
                         {"record_path", cfg.record.string()}};
  ordered_json decode = {{"temperature", cfg.decode.temperature},
                         {"top_p", cfg.decode.top_p},
                         {"max_new_tokens", cfg.decode.max_new_tokens},
                         {"max_context_tokens", cfg.decode.max_context_tokens}};
  decode["seed"] = cfg.decode.seed ? ordered_json(*cfg.decode.seed) : ordered_json(nullptr);
  manifest["decode"] = std::move(decode);
  manifest["prompt"] = {
      {"shot_mode", prompt.shot_mode == ShotMode::Few ? "few" : "zero"},
      {"exemplar_source", prompt.shot_mode == ShotMode::Few ? exemplar_path.string() : ""},
      {"exemplar_id", default_exemplar ? default_exemplar->encounter.id : ""},
      {"template_path", cfg.system_prompt.string()},
      {"template_sha256", sha256_hex(instruction)},
      {"token_budget", prompt.token_budget},
      {"token_inflation", prompt.token_inflation},
      {"truncate_middle", prompt.truncate_middle}};
  manifest["predictions"] = predictions_path.filename().string();
  manifest["summary"] = {{"encounters", runs.size()}, {"failed", failed}, {"orders", total_orders}};
  manifest["encounters"] = std::move(encounters);
  write_file(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");

  out << "extracted " << total_orders << " orders from " << runs.size() - failed << "/" << runs.size()
      << " encounters -> " << predictions_path.string() << '\n';
  if (failed > 0) {
    err << "error: " << failed << " of " << runs.size() << " encounters failed, see manifest.json\n";
    return kExtractionFailed;
  }
  return kOk;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  require_file(cfg.predictions, "predictions");
  const fs::path gold_path = cfg.gold.empty() ? cfg.corpus : cfg.gold;
  require_file(gold_path, "gold");
  const auto predictions = load_predictions(cfg.predictions);
  const auto gold = load_corpus(gold_path, CorpusRole::WithGold);
  const CorpusScore score = score_corpus(predictions, gold);
  const ordered_json j = corpus_score_to_json(score);
  if (cfg.json_only) {
    out << j.dump(2) << '\n';
  } else {
    const auto& t = score.overall.tally;
    out << format_report_table(score.overall) << "\nmatched " << t.matched << ", unmatched predictions "
        << t.unmatched_pred << ", unmatched gold " << t.unmatched_gold << ", excluded predictions "
        << t.excluded_pred << '\n';
  }
  if (!cfg.out_dir.empty()) {
    ensure_out_dir(cfg.out_dir);
    write_file(cfg.out_dir / "scores.json", j.dump(2) + "\n");
  }
  return kOk;
}

int cmd_audit(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  require_file(cfg.predictions, "predictions");
  const fs::path corpus_path = cfg.gold.empty() ? cfg.corpus : cfg.gold;
  const auto corpus = load_any_corpus(corpus_path);
  const auto predictions = load_predictions(cfg.predictions);
  const AuditReport report = audit_predictions(predictions, corpus);
  const ordered_json j = audit_to_json(report);
  if (cfg.json_only) {
    out << j.dump(2) << '\n';
  } else {
    out << format_audit_table(report);
  }
  if (!cfg.out_dir.empty()) {
    ensure_out_dir(cfg.out_dir);
    write_file(cfg.out_dir / "audit.json", j.dump(2) + "\n");
  }
  return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Medical order extraction from doctor-patient transcripts: corpus statistics, "
               "prompted extraction, scoring and output audits.",
               "medorder"};
  app.set_config("--config", "", "TOML-style key = value file; command-line flags win");
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));

  RunConfig cfg;
  std::string split, backend = "mock", shots = "0";
  std::string replay_path;
  std::optional<std::string> exemplar_id;
  std::optional<long> seed;
  long backoff_ms = 1000;

  app.add_option("--corpus", cfg.corpus, "Corpus file the command works on");
  app.add_option("--train", cfg.train, "Training split (exemplar source)");
  app.add_option("--dev", cfg.dev, "Development split");
  app.add_option("--test", cfg.test, "Test split");
  app.add_option("--split", split, "Use the configured train/dev/test path as --corpus")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  app.add_option("--predictions", cfg.predictions, "Prediction file (evaluate, audit)");
  app.add_option("--gold", cfg.gold, "Gold corpus (evaluate) or transcript corpus (audit)");
  app.add_option("--backend", backend, "Completion backend")
      ->check(CLI::IsMember({"endpoint", "mock", "replay"}));
  app.add_option("--endpoint-url", cfg.backend.endpoint_url, "OpenAI-compatible chat completions URL");
  app.add_option("--model", cfg.backend.model_name, "Model name sent to the endpoint");
  app.add_option("--api-key-env", cfg.backend.api_key_env, "Environment variable holding the API key")
      ->capture_default_str();
  app.add_option("--replay", replay_path, "Replay store (JSON lines) for the replay backend");
  app.add_option("--record", cfg.record, "Append endpoint responses to this replay store");
  app.add_option("--retries", cfg.backend.max_attempts, "Attempts per request")->capture_default_str();
  app.add_option("--backoff-ms", backoff_ms, "First retry delay in milliseconds")->capture_default_str();
  app.add_option("--shots", shots, "0 for zero-shot, 1 for one in-context example")
      ->check(CLI::IsMember({"0", "1"}));
  app.add_option("--exemplar-id", exemplar_id, "Training encounter to use as the example");
  app.add_option("--system-prompt", cfg.system_prompt, "System instruction template file");
  app.add_option("--token-budget", cfg.token_budget, "Prompt token budget");
  app.add_flag("--truncate", cfg.prompt.truncate_middle, "Drop middle turns instead of failing on budget");
  app.add_option("--temperature", cfg.decode.temperature)->capture_default_str();
  app.add_option("--top-p", cfg.decode.top_p)->capture_default_str();
  app.add_option("--max-new-tokens", cfg.decode.max_new_tokens)->capture_default_str();
  app.add_option("--max-context-tokens", cfg.decode.max_context_tokens)->capture_default_str();
  app.add_option("--seed", seed, "Forwarded to the endpoint");
  app.add_option("--out", cfg.out_dir, "Output directory");
  app.add_option("--jobs", cfg.jobs, "Encounters in flight during extract")->capture_default_str();
  app.add_flag("--json", cfg.json_only, "Print machine-readable JSON only");

  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  auto* extract = app.add_subcommand("extract", "Prompt the backend and write predictions");
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold orders");
  auto* audit = app.add_subcommand("audit", "Count schema violations and ungrounded text");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    cfg.backend.kind = *parse_backend_kind(backend);
    cfg.backend.replay_path = replay_path;
    cfg.backend.initial_backoff = std::chrono::milliseconds(backoff_ms);
    cfg.prompt.shot_mode = shots == "1" ? ShotMode::Few : ShotMode::Zero;
    cfg.prompt.exemplar_encounter_id = exemplar_id;
    cfg.decode.seed = seed;
    if (cfg.corpus.empty() && !split.empty())
      cfg.corpus = split == "train" ? cfg.train : split == "dev" ? cfg.dev : cfg.test;

    if (stats->parsed()) return cmd_stats(cfg, out, err);
    if (extract->parsed()) return cmd_extract(cfg, out, err);
    if (evaluate->parsed()) return cmd_evaluate(cfg, out, err);
    if (audit->parsed()) return cmd_audit(cfg, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const LookupError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    // IO and other runtime failures
    err << "error: " << e.what() << '\n';
    return kExtractionFailed;
  }
  return kUsageError;
}

}  // namespace medorder::cli
