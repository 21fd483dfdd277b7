// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "medorder/cli.hpp"
#include "medorder/corpus.hpp"
#include "medorder/parser.hpp"
#include "support.hpp"

using namespace medorder;
using testsupport::TempDir;
using testsupport::data;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}


}  // namespace

TEST_CASE("sha256") {
  CHECK(cli::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("stats") {
  const Result r = run_cli({"stats", "--corpus", data("synthetic_train.json").string()});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("Follow-Up") != std::string::npos);
  CHECK(r.out.find("63") != std::string::npos);

  const Result j = run_cli({"stats", "--json", "--corpus", data("synthetic_train.json").string()});
  REQUIRE(j.code == cli::kOk);
  const auto doc = nlohmann::json::parse(j.out);
  CHECK(doc["encounter_count"] == 63);
  CHECK(doc["orders_by_type"]["medication"] == 75);
  CHECK(doc["orders_by_type"]["followup"] == 25);
}

TEST_CASE("missing input file is a usage error naming the path") {
  const Result r = run_cli({"stats", "--corpus", "/nonexistent/train.json"});
  CHECK(r.code == cli::kUsageError);
  CHECK(r.err.find("/nonexistent/train.json") != std::string::npos);

  const Result e = run_cli({"evaluate", "--predictions", "/nonexistent/p.json", "--gold",
                            data("worked_gold.json").string()});
  CHECK(e.code == cli::kUsageError);
  CHECK(e.err.find("/nonexistent/p.json") != std::string::npos);
}

TEST_CASE("bad flags are usage errors") {
  CHECK(run_cli({}).code == cli::kUsageError);
  CHECK(run_cli({"stats", "--shots", "3"}).code == cli::kUsageError);
  CHECK(run_cli({"frobnicate"}).code == cli::kUsageError);
  CHECK(run_cli({"--help"}).code == cli::kOk);
}

TEST_CASE("evaluate the worked fixture") {
  const Result r = run_cli({"evaluate", "--predictions", data("worked_pred.json").string(), "--gold",
                            data("worked_gold.json").string()});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("avg_score                   21.67") != std::string::npos);
  CHECK(r.out.find("provenance_MultiLabel_f1    66.67") != std::string::npos);
}

TEST_CASE("gold as predictions scores 100") {
  const Result r = run_cli({"evaluate", "--json", "--predictions", data("synthetic_train.json").string(),
                            "--gold", data("synthetic_train.json").string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(nlohmann::json::parse(r.out)["overall"]["avg_score"] == 1.0);
}

TEST_CASE("prediction ids missing from the gold corpus") {
  const Result r = run_cli({"evaluate", "--predictions", data("worked_pred.json").string(), "--gold",
                            data("mini_gold.json").string()});
  CHECK(r.code == cli::kUsageError);
  CHECK(r.err.find("worked-1") != std::string::npos);
}

TEST_CASE("audit command") {
  TempDir dir("audit");
  const Result r = run_cli({"audit", "--predictions", data("audit_pred.json").string(), "--gold",
                            data("audit_corpus.json").string(), "--out", dir.path().string()});
  REQUIRE(r.code == cli::kOk);
  const auto doc = nlohmann::json::parse(testsupport::slurp(dir / "audit.json"));
  CHECK(doc["missing_description"]["count"] == 3);
  CHECK(doc["invalid_order_type"]["count"] == 8);
  CHECK(doc["missing_reason"]["count"] == 5);
  CHECK(doc["missing_provenance"]["count"] == 4);
}

TEST_CASE("mock extract reproduces the gold orders") {
  TempDir dir("extract");
  const Result r = run_cli({"extract", "--backend", "mock", "--corpus", data("synthetic_train.json").string(),
                            "--out", dir.path().string(), "--jobs", "4"});
  REQUIRE(r.code == cli::kOk);
  const auto preds = load_predictions(dir / "predictions.json");
  const auto gold = load_corpus(data("synthetic_train.json"), CorpusRole::WithGold);
  REQUIRE(preds.size() == gold.size());
  for (const Encounter& e : gold) {
    auto it = std::find_if(preds.begin(), preds.end(), [&](const PredictionEntry& p) { return p.first == e.id; });
    REQUIRE(it != preds.end());
    CHECK(it->second == *e.gold_orders);
  }
  const auto manifest = nlohmann::json::parse(testsupport::slurp(dir / "manifest.json"));
  CHECK(manifest["summary"]["failed"] == 0);
  CHECK(manifest["decode"]["temperature"] == 0.2);
  CHECK(manifest["prompt"]["template_sha256"].get<std::string>().size() == 64);
}

TEST_CASE("few-shot extract never uses the target as its own example") {
  TempDir dir("fewshot");
  const Result r = run_cli({"extract", "--backend", "mock", "--shots", "1", "--corpus",
                            data("mini_gold.json").string(), "--out", dir.path().string()});
  REQUIRE(r.code == cli::kOk);
  const auto manifest = nlohmann::json::parse(testsupport::slurp(dir / "manifest.json"));
  for (const auto& e : manifest["encounters"]) {
    REQUIRE(e.contains("exemplar_id"));
    CHECK(e["exemplar_id"] != e["id"]);
  }
}

TEST_CASE("unreachable endpoint flags every encounter") {
  TempDir dir("down");
  const Result r = run_cli({"extract", "--backend", "endpoint", "--endpoint-url",
                            "http://127.0.0.1:" + std::to_string(testsupport::closed_port()) + "/v1/chat/completions",
                            "--model", "m", "--retries", "1", "--corpus", data("mini_gold.json").string(),
                            "--out", dir.path().string()});
  CHECK(r.code == cli::kExtractionFailed);
  const auto manifest = nlohmann::json::parse(testsupport::slurp(dir / "manifest.json"));
  CHECK(manifest["summary"]["failed"] == 4);
  for (const auto& e : manifest["encounters"]) CHECK(e["status"] == "failed");
  const auto preds = load_predictions(dir / "predictions.json");
  CHECK(preds.size() == 4);
  for (const auto& p : preds) CHECK(p.second.empty());
}

TEST_CASE("a replay miss fails only that encounter") {
  TempDir dir("partial");
  std::string store = testsupport::slurp(data("mini_replay.jsonl"));
  store = store.substr(0, store.rfind("{\"id\": \"mini-d\""));
  testsupport::spit(dir / "store.jsonl", store);
  const Result r = run_cli({"extract", "--backend", "replay", "--replay", (dir / "store.jsonl").string(),
                            "--corpus", data("mini_gold.json").string(), "--out", (dir / "out").string()});
  CHECK(r.code == cli::kExtractionFailed);
  CHECK(r.err.find("mini-d") != std::string::npos);
  const auto manifest = nlohmann::json::parse(testsupport::slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["summary"]["failed"] == 1);
  CHECK(manifest["encounters"][0]["status"] == "ok");
  CHECK(manifest["encounters"][3]["status"] == "failed");
}

TEST_CASE("config file with flag override") {
  TempDir dir("config");
  testsupport::spit(dir / "run.toml", "corpus = \"" + data("mini_gold.json").string() +
                                          "\"\nbackend = \"mock\"\ntemperature = 0.7\njobs = 2\n");
  const Result r = run_cli({"extract", "--config", (dir / "run.toml").string(), "--temperature", "0.4",
                            "--out", (dir / "out").string()});
  REQUIRE(r.code == cli::kOk);
  const auto manifest = nlohmann::json::parse(testsupport::slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["decode"]["temperature"] == 0.4);
  CHECK(manifest["corpus"]["path"] == data("mini_gold.json").string());

  const Result from_file = run_cli({"extract", "--config", (dir / "run.toml").string(), "--out",
                                    (dir / "out2").string()});
  REQUIRE(from_file.code == cli::kOk);
  CHECK(nlohmann::json::parse(testsupport::slurp(dir / "out2" / "manifest.json"))["decode"]["temperature"] == 0.7);
}

TEST_CASE("replay extract is byte-stable") {
  TempDir dir("stable");
  const std::vector<std::string> base = {"extract", "--backend", "replay", "--replay",
                                         data("mini_replay.jsonl").string(), "--corpus",
                                         data("mini_gold.json").string(), "--jobs", "3", "--out"};
  auto a = base, b = base;
  a.push_back((dir / "a").string());
  b.push_back((dir / "b").string());
  REQUIRE(run_cli(a).code == cli::kOk);
  REQUIRE(run_cli(b).code == cli::kOk);
  CHECK(testsupport::slurp(dir / "a" / "predictions.json") == testsupport::slurp(dir / "b" / "predictions.json"));
  CHECK(testsupport::slurp(dir / "a" / "manifest.json") == testsupport::slurp(dir / "b" / "manifest.json"));
}
