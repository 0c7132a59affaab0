#include <doctest.h>

#include <cmath>

#include "aimguard/error.hpp"
#include "aimguard/inspector.hpp"
#include "bundles.hpp"
#include "fixtures.hpp"

using namespace aimguard;
using inspector::MatchMode;

TEST_CASE("default windows give 91 subsequences of 6 ticks") {
  const inspector::PipelineConfig cfg;
  CHECK(cfg.series_length() == 96);
  CHECK(cfg.subsequence_count() == 91);

  const auto s = fixture::stream("p", "m", 0, 200, {100}, 3);
  const auto ex = trajectory::extract_windows(s, "m", cfg.window);
  const auto series = features::compute_features(ex.windows.at(0));
  const auto matrix = inspector::series_matrix(series, inspector::Normalizer::identity());
  const auto batch = inspector::slide(matrix, 6);
  REQUIRE(batch.count() == 91);
  for (std::size_t i = 0; i < batch.count(); i += 9) {
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t c = 0; c < 8; ++c) CHECK(batch.windows[i].at(r, c) == matrix.at(i + r, c));
    }
  }
  // the tick channel is relative to the elimination, which sits at row m - 1
  CHECK(matrix.at(63, features::kT) == 0.0);
  CHECK(matrix.at(63, features::kEliminated) == 1.0);
  CHECK_THROWS_AS(inspector::slide(matrix, 97), Error);
}

TEST_CASE("normalizer standardizes each channel") {
  std::vector<features::FeatureSeries> set;
  for (int k = 0; k < 5; ++k) {
    const auto s = fixture::stream("p", "m", 0, 200, {100}, 40 + k);
    set.push_back(features::compute_features(trajectory::extract_windows(s, "m", {64, 32}).windows.at(0)));
  }
  const auto n = inspector::Normalizer::fit(set);
  std::array<double, 8> sum{}, sq{};
  double count = 0;
  for (const auto& s : set) {
    const auto m = inspector::series_matrix(s, n);
    for (std::size_t r = 0; r < m.dim(0); ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        sum[c] += m.at(r, c);
        sq[c] += m.at(r, c) * m.at(r, c);
      }
      count += 1;
    }
  }
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(std::abs(sum[c] / count) < 1e-9);
    // constant channels keep scale 1 and become all-zero
    CHECK((std::abs(sq[c] / count - 1.0) < 1e-9 || sq[c] == 0.0));
  }
  CHECK(inspector::Normalizer::from_json(n.to_json()) == n);
}

TEST_CASE("learned threshold reaches the exhaustive best F1") {
  auto rng = util::make_rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + trial % 30;
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = util::uniform(rng, 0.0, 1.0) < 0.4;
      // coarse scores force ties
      scores.push_back(std::round(util::uniform(rng, 0.0, 1.0) * (trial % 2 ? 10 : 1000)) / (trial % 2 ? 10 : 1000) +
                       (y ? 0.1 : 0.0));
      labels.push_back(y);
    }
    if (std::count(labels.begin(), labels.end(), 1) == 0) labels[0] = 1;
    if (std::count(labels.begin(), labels.end(), 0) == 0) labels[1] = 0;
    const auto r = inspector::learn_threshold(scores, labels);
    const double best = oracle::best_threshold_f1(scores, labels);
    CHECK(r.f1 == doctest::Approx(best).epsilon(1e-15));
    CHECK(inspector::f1_at(scores, labels, r.threshold) == doctest::Approx(best).epsilon(1e-15));
  }
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> one{1, 1};
  CHECK_THROWS_AS(inspector::learn_threshold(s, one), Error);
}

TEST_CASE("match features by mode") {
  const std::vector<double> scores{0.2, 0.4, 0.9};
  const auto o = inspector::match_features(scores, MatchMode::kOriginal, 0.5);
  const double mean = 0.5;
  const double sd = std::sqrt((0.09 + 0.01 + 0.16) / 3.0);
  REQUIRE(o.size() == 5);
  CHECK(o[0] == doctest::Approx(mean));
  CHECK(o[1] == doctest::Approx(sd));
  CHECK(o[2] == 0.2);
  CHECK(o[3] == 0.9);
  CHECK(o[4] == 3.0);
  CHECK(inspector::match_features(scores, MatchMode::kBinary, 0.4) == std::vector<double>{2.0 / 3.0});
  const auto a = inspector::match_features(scores, MatchMode::kAll, 0.5);
  REQUIRE(a.size() == 6);
  CHECK(a[5] == doctest::Approx(1.0 / 3.0));
  CHECK(inspector::match_features(std::vector<double>{0.7}, MatchMode::kOriginal, 0.5)[1] == 0.0);
  CHECK(inspector::match_feature_names(MatchMode::kAll).size() == 6);
  CHECK_THROWS_AS(inspector::match_features({}, MatchMode::kOriginal, 0.5), Error);
  CHECK(inspector::parse_match_mode("all") == MatchMode::kAll);
  CHECK_THROWS_AS(inspector::parse_match_mode("x"), Error);
}

TEST_CASE("pipeline config json keeps missing keys at defaults") {
  const auto cfg = inspector::PipelineConfig::from_json({{"w", 8}, {"mode", "a"}});
  CHECK(cfg.w == 8);
  CHECK(cfg.mode == MatchMode::kAll);
  CHECK(cfg.window.m == 64);
  const auto again = inspector::PipelineConfig::from_json(cfg.to_json());
  CHECK(again.to_json() == cfg.to_json());
}

TEST_CASE("trained bundle round-trips and predicts identically") {
  const auto& t = fixture::trained();
  fixture::TempDir dir;
  t.bundle.save(dir / "model.json");
  const auto loaded = inspector::DetectorBundle::load(dir / "model.json");
  CHECK(loaded.model_version() == t.bundle.model_version());
  CHECK(loaded.to_json() == t.bundle.to_json());
  for (const auto& m : t.test.matches) {
    const auto a = inspector::predict_match(t.bundle, m);
    const auto b = inspector::predict_match(loaded, m);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].to_json() == b[i].to_json());
  }
}

TEST_CASE("score_elimination composes the two networks") {
  const auto& t = fixture::trained();
  const auto verdicts = inspector::predict_match(t.bundle, t.test.matches.at(0));
  const auto& v = *std::find_if(verdicts.begin(), verdicts.end(), [](const auto& p) { return p.included; });
  const auto& series = v.series.at(0);
  const auto e = inspector::score_elimination(t.bundle, series);
  CHECK(e.per_subseq.size() == 91);
  const auto batch = inspector::slide(series, t.bundle.config.w, t.bundle.normalizer);
  const auto direct = inspector::score_subsequences(t.bundle.subsequence_model, t.bundle.subsequence_params, batch);
  CHECK(direct == e.per_subseq);
  CHECK(e.aggregated == inspector::aggregate(t.bundle.aggregator_model, t.bundle.aggregator_params, direct));
  for (double p : e.per_subseq) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  CHECK(v.match_vector == inspector::match_features(v.elimination_scores(), t.bundle.config.mode,
                                                    t.bundle.threshold.threshold));
  CHECK(v.probability == t.bundle.forest.predict_proba(v.match_vector));
}

TEST_CASE("a player's verdict depends only on that player's stream") {
  const auto& t = fixture::trained();
  const auto& match = t.test.matches.at(1);
  const auto together = inspector::predict_match(t.bundle, match);
  for (std::size_t i = 0; i < match.players.size(); ++i) {
    ingest::MatchRecord alone = match;
    alone.players = {match.players[i]};
    const auto solo = inspector::predict_match(t.bundle, alone);
    REQUIRE(solo.size() == 1);
    CHECK(solo[0].to_json() == together[i].to_json());
  }
}

TEST_CASE("players without usable windows are excluded with a reason") {
  const auto& t = fixture::trained();
  ingest::MatchRecord m;
  m.match_id = "x";
  m.players.push_back(fixture::stream("quiet", "x", 0, 200, {}, 1));
  m.players.push_back(fixture::stream("cut", "x", 0, 200, {10}, 1));
  const auto v = inspector::predict_match(t.bundle, m);
  CHECK_FALSE(v[0].included);
  CHECK(v[0].reason == "no_eliminations");
  CHECK_FALSE(v[1].included);
  CHECK(v[1].reason == "no_valid_windows");
}
