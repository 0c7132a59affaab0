#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "aimguard/util.hpp"
#include "fixtures.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Runs the CLI binary with stdout and stderr captured; returns the exit code.
int aimguard_cli(const std::string& args, std::string* output = nullptr) {
  fixture::TempDir scratch;
  const auto log = scratch / "out.txt";
  const std::string cmd = std::string(AIMGUARD_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = aimguard::util::read_file(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) { return json::parse(aimguard::util::read_file(p)); }

}  // namespace

TEST_CASE("usage exit codes") {
  std::string out;
  CHECK(aimguard_cli("--help", &out) == 0);
  CHECK(out.find("simulate") != std::string::npos);
  CHECK(aimguard_cli("--version", &out) == 0);
  CHECK(aimguard_cli("") == 2);
  CHECK(aimguard_cli("simulate --no-such-flag 1") == 2);
  CHECK(aimguard_cli("frobnicate") == 2);
  fixture::TempDir dir;
  CHECK(aimguard_cli("simulate --matches 0 --out " + (dir / "x").string()) == 2);
  CHECK(aimguard_cli("extract --ticks " + (dir / "missing.csv").string() + " --out " + (dir / "f.csv").string()) == 1);
}

TEST_CASE("config file overrides flags and lands in the manifest") {
  fixture::TempDir dir;
  aimguard::util::write_file(dir / "cfg.json", R"({"seed": 7, "players": 4})");
  REQUIRE(aimguard_cli("simulate --matches 1 --players 6 --seed 3 --out " + (dir / "a").string() + " --config " +
                       (dir / "cfg.json").string()) == 0);
  const auto m = read_json(dir / "a" / "manifest.json");
  CHECK(m["command"] == "simulate");
  CHECK(m["config"]["seed"] == 7);
  CHECK(m["config"]["players"] == 4);
  CHECK(m["config"]["matches"] == 1);
  CHECK(m["config_sha256"] == aimguard::util::sha256_hex(m["config"].dump()));
  CHECK(m["summary"]["dataset"]["players"] == 4);
  CHECK(m.contains("wall_seconds"));

  aimguard::util::write_file(dir / "bad.json", "{nope");
  CHECK(aimguard_cli("simulate --out " + (dir / "b").string() + " --config " + (dir / "bad.json").string()) == 2);
}

TEST_CASE("end-to-end: simulate, train, predict, eval, explain, render") {
  fixture::TempDir dir;
  const auto d = [&](const std::string& name) { return (dir / name).string(); };
  REQUIRE(aimguard_cli("simulate --players 10 --cheater-frac 0.2 --seed 5 --splits train:10,val:5,test:5 --out " +
                       d("data")) == 0);
  CHECK(fs::exists(dir / "data" / "train" / "ticks.csv"));

  REQUIRE(aimguard_cli("train --train " + d("data/train") + " --val " + d("data/val") + " --test " + d("data/test") +
                       " --arch tiny --epochs 2 --samples-per-epoch 1024 --val-samples 1024 --agg-epochs 20 --out " +
                       d("model")) == 0);
  for (const char* f : {"model.json", "config.json", "history.json", "test_verdicts.jsonl", "test_report.json",
                        "manifest.json"}) {
    CHECK(fs::exists(dir / "model" / f));
  }
  const auto report = read_json(dir / "model" / "test_report.json");
  CHECK(report.contains("metrics"));
  CHECK(report["baselines"].at(0)["baseline"] == "th_acc_a");

  REQUIRE(aimguard_cli("predict --model " + d("model/model.json") + " --ticks " + d("data/test/ticks.csv") +
                       " --out " + d("verdicts.jsonl")) == 0);
  CHECK(fs::exists(dir / "verdicts.jsonl.manifest.json"));
  CHECK(aimguard::util::read_file(dir / "verdicts.jsonl") ==
        aimguard::util::read_file(dir / "model" / "test_verdicts.jsonl"));

  REQUIRE(aimguard_cli("eval --verdicts " + d("verdicts.jsonl") + " --labels " + d("data/test/labels.csv") +
                       " --ticks " + d("data/test/ticks.csv") + " --compare " + d("verdicts.jsonl") + " --out " +
                       d("eval.json")) == 0);
  const auto ev = read_json(dir / "eval.json");
  CHECK(ev.contains("significance"));

  REQUIRE(aimguard_cli("explain --model " + d("model/model.json") + " --ticks " + d("data/test/ticks.csv") +
                       " --samples 4 --all --out " + d("explanations")) == 0);
  std::vector<fs::path> docs;
  for (const auto& e : fs::directory_iterator(dir / "explanations")) {
    if (e.path().filename() != "manifest.json") docs.push_back(e.path());
  }
  REQUIRE_FALSE(docs.empty());
  REQUIRE(aimguard_cli("render --explanation " + docs[0].string() + " --out " + d("traj.svg") + " --frames " +
                       d("frames.json")) == 0);
  CHECK(aimguard::util::read_file(dir / "traj.svg").rfind("<svg", 0) == 0);
  CHECK(read_json(dir / "frames.json").contains("frames"));
}
