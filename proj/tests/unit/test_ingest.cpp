#include <doctest.h>

#include <sstream>

#include "aimguard/error.hpp"
#include "aimguard/ingest.hpp"
#include "aimguard/simulator.hpp"
#include "fixtures.hpp"

using namespace aimguard;

namespace {
const std::string kHeader = "tick,pitch,yaw,fired,eliminated,hit,player_id,match_id\n";
}

TEST_CASE("minimal csv row parses into one match, one player, one tick") {
  const auto matches = ingest::parse_tick_log(kHeader + "10,0.0,0.0,false,true,false,p1,m1\n", ingest::LogFormat::kCsv);
  REQUIRE(matches.size() == 1);
  CHECK(matches[0].match_id == "m1");
  REQUIRE(matches[0].players.size() == 1);
  const auto& t = matches[0].players[0].ticks;
  REQUIRE(t.size() == 1);
  CHECK(t[0].tick == 10);
  CHECK(t[0].eliminated);
  CHECK_FALSE(t[0].fired);
  CHECK(t[0].hit == std::optional<bool>(false));
}

TEST_CASE("out-of-range angles are rejected with field, value and row") {
  try {
    ingest::parse_tick_log(kHeader + "1,0,0,false,false,,p1,m1\n2,95,0,false,false,,p1,m1\n", ingest::LogFormat::kCsv);
    FAIL("expected RangeViolation");
  } catch (const RangeViolation& e) {
    CHECK(e.field() == "pitch");
    CHECK(e.value() == 95.0);
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(ingest::parse_tick_log(kHeader + "1,0,-180.5,false,false,,p1,m1\n", ingest::LogFormat::kCsv),
                  RangeViolation);
}

TEST_CASE("malformed rows report their line") {
  try {
    ingest::parse_tick_log(kHeader + "1,0,0,false,false,,p1,m1\nx,0,0,false,false,,p1,m1\n", ingest::LogFormat::kCsv);
    FAIL("expected MalformedRow");
  } catch (const MalformedRow& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(ingest::parse_tick_log("1,0,0,false,false,,p1,m1\n", ingest::LogFormat::kCsv), MalformedRow);
  CHECK_THROWS_AS(ingest::parse_tick_log(kHeader + "1,0,0,maybe,false,,p1,m1\n", ingest::LogFormat::kCsv),
                  MalformedRow);
  CHECK_THROWS_AS(ingest::parse_tick_log(R"({"tick":1,"pitch":0})" "\n", ingest::LogFormat::kJsonl), MalformedRow);
}

TEST_CASE("duplicate ticks are kept and reported as warnings") {
  const auto matches = ingest::parse_tick_log(
      kHeader + "1,0,0,false,false,,p1,m1\n2,0,0,false,false,,p1,m1\n2,0,0,false,false,,p1,m1\n",
      ingest::LogFormat::kCsv);
  REQUIRE(matches.size() == 1);
  CHECK(matches[0].players[0].ticks.size() == 3);
  REQUIRE(matches[0].warnings.size() == 1);
  CHECK(matches[0].warnings[0] == ingest::DuplicateTick{"p1", 2});
}

TEST_CASE("empty input writes header only") {
  CHECK(ingest::write_tick_log(std::vector<ingest::MatchRecord>{}, ingest::LogFormat::kCsv) == kHeader);
}

TEST_CASE("floats are written with six decimals and re-parse equal") {
  ingest::MatchRecord m;
  m.match_id = "m1";
  ingest::PlayerStream p;
  p.player_id = "p1";
  p.ticks.push_back({5, 0.1 + 0.2, -12.5, true, false, std::nullopt, "p1", "m1"});
  m.players.push_back(p);
  const auto text = ingest::write_tick_log(std::span(&m, 1), ingest::LogFormat::kCsv);
  CHECK(text.find("0.300000") != std::string::npos);
  const auto again = ingest::parse_tick_log(text, ingest::LogFormat::kCsv);
  CHECK(ingest::write_tick_log(again, ingest::LogFormat::kCsv) == text);
}

TEST_CASE("simulator output round-trips bit-identically in both formats") {
  simulator::DatasetConfig cfg;
  cfg.matches = 2;
  cfg.players = 3;
  cfg.seed = 11;
  const auto ds = simulator::gen_dataset(cfg);
  std::size_t rows = 0;
  for (const auto& m : ds.matches) {
    for (const auto& p : m.players) rows += p.ticks.size();
  }
  CHECK(rows >= 1000);
  for (auto format : {ingest::LogFormat::kCsv, ingest::LogFormat::kJsonl}) {
    const auto text = ingest::write_tick_log(ds.matches, format);
    const auto parsed = ingest::parse_tick_log(text, format);
    CHECK(ingest::write_tick_log(parsed, format) == text);
    REQUIRE(parsed.size() == ds.matches.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) CHECK(parsed[i].players == ds.matches[i].players);
  }
}

TEST_CASE("labels parse, apply and collect") {
  std::istringstream in("match_id,player_id,is_cheater\nm1,p1,true\nm1,p2,0\n");
  const auto labels = ingest::parse_labels(in);
  CHECK(labels.size() == 2);
  CHECK(labels.at({"m1", "p1"}));
  auto matches = ingest::parse_tick_log(kHeader + "1,0,0,false,false,,p1,m1\n1,0,0,false,false,,p2,m1\n",
                                        ingest::LogFormat::kCsv);
  ingest::apply_labels(matches, labels);
  CHECK(matches[0].label("p1") == std::optional<bool>(true));
  CHECK(matches[0].label("p2") == std::optional<bool>(false));
  CHECK(ingest::collect_labels(matches) == labels);
  CHECK_FALSE(matches[0].has_hit_column());
}
