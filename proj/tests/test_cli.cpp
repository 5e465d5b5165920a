#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "beliefkit/kb.hpp"
#include "beliefkit/synthetic.hpp"
#include "test_helpers.hpp"

using namespace beliefkit;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
  std::string err;
};

CliResult cli(const testing::TempDir& dir, const std::string& args) {
  const std::string out = dir / "stdout.txt";
  const std::string err = dir / "stderr.txt";
  const std::string cmd =
      std::string("'") + BELIEFKIT_CLI + "' " + args + " >'" + out + "' 2>'" + err + "'";
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

void write_tiny_kb(const testing::TempDir& dir) {
  SyntheticOptions o;
  o.roots = 2;
  o.mids_per_root = 2;
  o.leaves_per_mid = 2;
  o.pool_per_mid = 3;
  o.features_per_class = 1;
  o.calibration_subjects = 3;
  o.silver_subjects = 3;
  o.facts_per_subject = 12;
  write_synthetic(dir.path().string(), o);
  write_file(dir / "config.json", R"({
    "data": {"train_facts": "calibration_facts.json", "eval_facts": "silver_facts.json",
             "constraints": "constraints_v2.json"},
    "train": {"epochs": 2}, "model": {"dim": 4}, "methods": ["loco"]})");
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
  testing::TempDir dir("cli-usage");
  CHECK(cli(dir, "").status == 2);
  CHECK(cli(dir, "frobnicate").status == 2);
  CHECK(cli(dir, "ground --facts x.json").status == 2);
  CHECK(cli(dir, "run").status == 2);
  CHECK(cli(dir, "--help").status == 0);
}

TEST_CASE("missing inputs name the path") {
  testing::TempDir dir("cli-missing");
  const std::string missing = dir / "absent_facts.json";
  auto r = cli(dir, "ground --facts '" + missing + "' --constraints '" + missing + "'");
  CHECK(r.status == 2);
  CHECK(r.err.find(missing) != std::string::npos);

  r = cli(dir, "run -c '" + (dir / "absent_config.json") + "'");
  CHECK(r.status == 2);
  CHECK(r.err.find("absent_config.json") != std::string::npos);

  write_file(dir / "config.json", R"({"data": {"train_facts": "nope.json",
                                               "constraints": "nope2.json"}})");
  r = cli(dir, "run -c '" + (dir / "config.json") + "' -o '" + (dir / "out") + "'");
  CHECK(r.status == 2);
  CHECK(r.err.find("nope.json") != std::string::npos);
}

TEST_CASE("bad configuration exits 2") {
  testing::TempDir dir("cli-config");
  write_tiny_kb(dir);
  const std::string cfg = "-c '" + (dir / "config.json") + "' -o '" + (dir / "out") + "'";
  CHECK(cli(dir, "run " + cfg + " -m magic").status == 2);
  CHECK(cli(dir, "compare " + cfg).status == 2);
  CHECK(cli(dir, "run " + cfg + " --fraction 2 --split t1t2").status == 2);
  CHECK(cli(dir, "eval " + cfg + " --model provider --endpoint tcp:nowhere").status == 2);
  write_file(dir / "typo.json", R"({"epochs": 3})");
  const auto r = cli(dir, "run -c '" + (dir / "typo.json") + "'");
  CHECK(r.status == 2);
  CHECK(r.err.find("epochs") != std::string::npos);
}

TEST_CASE("ground prints split counts") {
  testing::TempDir dir("cli-ground");
  write_file(dir / "facts.json", R"({"facts": [
    {"subject": "s", "property": "IsA,dog", "label": true},
    {"subject": "s", "property": "IsA,mammal", "label": true},
    {"subject": "s", "property": "HasPart,tail", "label": true},
    {"subject": "s", "property": "IsA,sport"}]})");
  write_file(dir / "constraints.json", R"({"constraints": [
    {"antecedent": {"property": "IsA,dog", "polarity": true},
     "consequent": {"property": "IsA,mammal", "polarity": true}},
    {"antecedent": {"property": "IsA,mammal", "polarity": true},
     "consequent": {"property": "IsA,fish", "polarity": false}}]})");
  const auto r = cli(dir, "ground --facts '" + (dir / "facts.json") + "' --constraints '" +
                              (dir / "constraints.json") + "' -o '" + (dir / "g") + "'");
  REQUIRE(r.status == 0);
  CHECK(r.out.find("antecedent facts: 2") != std::string::npos);
  CHECK(r.out.find("consequent facts: 0") != std::string::npos);
  CHECK(r.out.find("excluded facts: 2") != std::string::npos);
  CHECK(fs::exists(dir / "g/grounded.json"));
}

TEST_CASE("run and eval write reports") {
  testing::TempDir dir("cli-run");
  write_tiny_kb(dir);
  const std::string out = dir / "out";
  auto r = cli(dir, "run -c '" + (dir / "config.json") + "' -o '" + out + "' -m loco,sft -j 2");
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("loco") != std::string::npos);
  for (const char* f : {"report_train.json", "report_eval.json", "history.json", "table.txt",
                        "model_loco.json", "model_sft.json", "config_resolved.json"}) {
    CHECK_MESSAGE(fs::exists(fs::path(out) / f), f);
  }

  r = cli(dir, "eval -c '" + (dir / "config.json") + "' -o '" + (dir / "eval") +
                   "' --model embedding --parameters '" + out + "/model_loco.json'");
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("zero-train") != std::string::npos);

  r = cli(dir, "eval -c '" + (dir / "config.json") + "' -o '" + (dir / "provider") +
                   "' --model provider --endpoint 'exec:" + FAKE_PROVIDER + " keyword IsA'");
  REQUIRE_MESSAGE(r.status == 0, r.err);

  r = cli(dir, "compare -c '" + (dir / "config.json") + "' -o '" + (dir / "cmp") +
                   "' -m loco,maxsat-baseline");
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(fs::exists(dir / "cmp/compare.txt"));
}

TEST_CASE("runtime failures exit 1 and leave nothing behind") {
  testing::TempDir dir("cli-fail");
  write_tiny_kb(dir);
  const auto r = cli(dir, "eval -c '" + (dir / "config.json") + "' -o '" + (dir / "out") +
                              "' --model provider --endpoint 'exec:" + FAKE_PROVIDER + " exit'");
  CHECK(r.status == 1);
  CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("synth writes a knowledge base") {
  testing::TempDir dir("cli-synth");
  const auto r = cli(dir, "synth -o '" + (dir / "kb") + "' --calibration-subjects 2");
  REQUIRE(r.status == 0);
  CHECK(load_facts(dir / "kb/calibration_facts.json").subjects().size() == 2);
}

}
