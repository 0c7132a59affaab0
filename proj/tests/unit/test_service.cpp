#include <doctest.h>

#include <httplib.h>

#include <fstream>
#include <thread>

#include "aimguard/error.hpp"
#include "aimguard/explainer.hpp"
#include "aimguard/service.hpp"
#include "bundles.hpp"
#include "fixtures.hpp"

using namespace aimguard;
using nlohmann::json;

namespace {

json record(const std::string& match, const std::string& player, double p, bool verdict) {
  return {{"match_id", match},         {"player_id", player},     {"verdict", verdict},
          {"probability", p},          {"threshold", 0.5},        {"elimination_ticks", {100, 200}},
          {"elimination_scores", {0.25, 0.75}}};
}

std::vector<json> three_cases() {
  return {record("m1", "a", 0.9, true), record("m1", "b", 0.2, false), record("m2", "a", 0.6, true),
          {{"match_id", "m2"}, {"player_id", "x"}, {"verdict", nullptr}, {"excluded", "no_eliminations"}}};
}

json review(const std::string& reviewer, const std::string& decision = "cheater", int confidence = 4) {
  return {{"reviewer_id", reviewer}, {"decision", decision}, {"confidence", confidence}, {"review_seconds", 12.5}};
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kIo;  // nothing thrown; never expected by these tests
}

}  // namespace

TEST_CASE("case ids are stable hashes of match and player") {
  CHECK(service::case_id("m1", "a").size() == 16);
  CHECK(service::case_id("m1", "a") == util::sha256_hex(std::string("m1\0a", 4)).substr(0, 16));
  CHECK(service::case_id("m1", "a") != service::case_id("m1a", ""));
}

TEST_CASE("empty store") {
  fixture::TempDir dir;
  service::CaseStore store({}, {}, dir / "store");
  CHECK(store.size() == 0);
  const auto page = store.list({});
  CHECK(page.total == 0);
  CHECK(page.cases.empty());
  CHECK(store.audit().empty());
  CHECK(std::filesystem::exists(store.log_path()));
}

TEST_CASE("listing filters, sorts and pages") {
  fixture::TempDir dir;
  service::CaseStore store(three_cases(), {}, dir / "store");
  CHECK(store.size() == 3);
  auto page = store.list({});
  REQUIRE(page.total == 3);
  CHECK(page.cases[0].probability == 0.9);
  CHECK(page.cases[2].probability == 0.2);
  service::CaseFilter f;
  f.flagged = true;
  CHECK(store.list(f).total == 2);
  f = {};
  f.min_p = 0.5;
  CHECK(store.list(f).total == 2);
  f = {};
  f.page = 2;
  f.page_size = 2;
  page = store.list(f);
  CHECK(page.total == 3);
  REQUIRE(page.cases.size() == 1);
  CHECK(page.cases[0].probability == 0.2);
  f.page_size = 0;
  CHECK(kind_of([&] { store.list(f); }) == ErrorKind::kValidation);
  const auto c = store.get(service::case_id("m1", "a"));
  CHECK(c.eliminations == std::vector<std::pair<std::int64_t, double>>{{100, 0.25}, {200, 0.75}});
  CHECK_FALSE(c.explanation.has_value());
}

TEST_CASE("verdict state machine") {
  fixture::TempDir dir;
  service::CaseStore store(three_cases(), {}, dir / "store");
  const auto id = service::case_id("m1", "a");
  CHECK(store.get(id).status() == service::CaseStatus::kPending);
  CHECK(kind_of([&] { store.post_verdict("0000000000000000", review("r1")); }) == ErrorKind::kNotFound);
  CHECK(kind_of([&] { store.post_verdict(id, review("r1", "guilty")); }) == ErrorKind::kValidation);
  CHECK(kind_of([&] { store.post_verdict(id, review("r1", "cheater", 6)); }) == ErrorKind::kValidation);
  CHECK(kind_of([&] { store.post_verdict(id, review("")); }) == ErrorKind::kValidation);
  auto bad = review("r1");
  bad["review_seconds"] = -1;
  CHECK(kind_of([&] { store.post_verdict(id, bad); }) == ErrorKind::kValidation);
  CHECK(store.verdict_count() == 0);

  const auto v = store.post_verdict(id, review("r1"));
  CHECK(v.case_id == id);
  CHECK_FALSE(v.timestamp.empty());
  CHECK(store.get(id).status() == service::CaseStatus::kReviewed);
  CHECK(kind_of([&] { store.post_verdict(id, review("r1", "legitimate")); }) == ErrorKind::kConflict);
  store.post_verdict(id, review("r2", "legitimate", 2));
  const auto agreement = store.get(id).agreement();
  CHECK(agreement["reviews"] == 2);
  CHECK(agreement["cheater"] == 1);
  CHECK(agreement["unanimous"] == false);
  service::CaseFilter f;
  f.status = service::CaseStatus::kPending;
  CHECK(store.list(f).total == 2);
}

TEST_CASE("two concurrent writers lose nothing") {
  fixture::TempDir dir;
  const auto id = service::case_id("m1", "a");
  {
    service::CaseStore store(three_cases(), {}, dir / "store");
    std::atomic<int> conflicts = 0;
    auto writer = [&](int who) {
      for (int i = 0; i < 50; ++i) store.post_verdict(id, review("w" + std::to_string(who) + "-" + std::to_string(i)));
      // both race for the same reviewer id; exactly one wins
      try {
        store.post_verdict(id, review("shared"));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kConflict) ++conflicts;
      }
    };
    std::thread a(writer, 0), b(writer, 1);
    a.join();
    b.join();
    CHECK(conflicts == 1);
    CHECK(store.verdict_count() == 101);
    CHECK(store.get(id).reviews.size() == 101);
  }
  service::CaseStore again(three_cases(), {}, dir / "store");
  CHECK(again.verdict_count() == 101);
  CHECK(again.skipped_log_lines() == 0);
  CHECK(again.get(id).reviews.size() == 101);
}

TEST_CASE("replay after restart, torn final line and orphans") {
  fixture::TempDir dir;
  const auto id = service::case_id("m2", "a");
  {
    service::CaseStore store(three_cases(), {}, dir / "store");
    store.post_verdict(id, review("r1"));
    store.post_verdict(id, review("r2"));
  }
  {
    std::ofstream out(dir / "store" / "verdicts.jsonl", std::ios::app);
    out << R"({"case_id":")" << id << R"(","reviewer_id":"r3","deci)";
  }
  {
    service::CaseStore store(three_cases(), {}, dir / "store");
    CHECK(store.verdict_count() == 2);
    CHECK(store.skipped_log_lines() == 1);
    CHECK(store.get(id).reviews.size() == 2);
    // the next acknowledged write must survive the following restart
    store.post_verdict(id, review("r3"));
  }
  {
    service::CaseStore store(three_cases(), {}, dir / "store");
    CHECK(store.verdict_count() == 3);
    CHECK(store.skipped_log_lines() == 0);
    CHECK(kind_of([&] { store.post_verdict(id, review("r1")); }) == ErrorKind::kConflict);
  }
  {
    // verdicts for cases that are no longer loaded stay in the log
    service::CaseStore store({record("m9", "z", 0.5, true)}, {}, dir / "store");
    CHECK(store.verdict_count() == 3);
    CHECK(store.get(service::case_id("m9", "z")).reviews.empty());
  }
}

TEST_CASE("http endpoints") {
  const auto& t = fixture::trained();
  const auto verdicts = inspector::predict_match(t.bundle, t.test.matches.at(0));
  const auto& v = *std::find_if(verdicts.begin(), verdicts.end(), [](const auto& p) { return p.included; });
  fixture::TempDir dir;
  std::filesystem::create_directories(dir / "explanations");
  const auto id = service::case_id(v.match_id, v.player_id);
  explainer::ExplainOptions opts;
  opts.n_samples = 5;
  const auto doc = explainer::export_attribution(explainer::explain_player(t.bundle, v, opts)).dump();
  util::write_file(dir / "explanations" / (id + ".json"), doc);
  std::vector<json> records;
  for (const auto& p : verdicts) records.push_back(p.to_json());

  service::CaseStore store(records, dir / "explanations", dir / "store");
  service::ServerOptions opt;
  opt.port = 0;
  opt.token = "s3cret";
  service::ReviewServer server(store, opt);
  const int port = server.bind();
  std::thread loop([&] { server.listen(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  CHECK(cli.Get("/api/cases")->status == 401);
  httplib::Headers auth{{"X-Aimguard-Token", "s3cret"}};

  auto r = cli.Get("/api/health", auth);
  CHECK(r->status == 200);
  r = cli.Get("/api/cases?page_size=2", auth);
  REQUIRE(r->status == 200);
  CHECK(json::parse(r->body).size() == std::min<std::size_t>(2, store.size()));
  CHECK(r->get_header_value("X-Total-Count") == std::to_string(store.size()));
  CHECK(cli.Get("/api/cases?page=0", auth)->status == 400);

  r = cli.Get("/api/cases/" + id, auth);
  REQUIRE(r->status == 200);
  CHECK(json::parse(r->body)["player_id"] == v.player_id);
  CHECK(json::parse(r->body)["explanation"] == id + ".json");
  r = cli.Get("/api/cases/" + id + "/explanation", auth);
  CHECK(r->body == doc);
  r = cli.Get("/api/cases/" + id + "/frames", auth);
  REQUIRE(r->status == 200);
  const auto body = json::parse(r->body);
  CHECK(body["case_id"] == id);
  const auto& frames = body["eliminations"];
  REQUIRE(frames.size() == v.eliminations.size());
  CHECK(frames[0]["frames"].size() == 96);
  CHECK(frames[0]["frames"][0]["attribution"].size() == 8);
  CHECK(cli.Get("/api/cases/ffffffffffffffff", auth)->status == 404);

  r = cli.Post("/api/cases/" + id + "/verdicts", auth, review("r1").dump(), "application/json");
  CHECK(r->status == 201);
  CHECK(json::parse(r->body)["reviewer_id"] == "r1");
  r = cli.Post("/api/cases/" + id + "/verdicts", auth, review("r1").dump(), "application/json");
  CHECK(r->status == 409);
  CHECK(json::parse(r->body)["error"] == "Conflict");
  r = cli.Post("/api/cases/" + id + "/verdicts", auth, "{not json", "application/json");
  CHECK(r->status == 400);
  r = cli.Post("/api/cases/" + id + "/verdicts", auth, review("r2", "maybe").dump(), "application/json");
  CHECK(r->status == 400);
  CHECK(json::parse(r->body)["error"] == "ValidationError");
  r = cli.Get("/api/cases?status=reviewed", auth);
  CHECK(json::parse(r->body).size() == 1);
  r = cli.Get("/api/audit", auth);
  CHECK(r->body == store.audit());
  CHECK(std::count(r->body.begin(), r->body.end(), '\n') == 1);

  server.stop();
  loop.join();
}
