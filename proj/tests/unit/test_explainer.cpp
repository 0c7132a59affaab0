#include <doctest.h>

#include <stdlib.h>

#include <cmath>

#include "aimguard/error.hpp"
#include "aimguard/explainer.hpp"
#include "bundles.hpp"
#include "fixtures.hpp"

using namespace aimguard;

namespace {

nn::Tensor random_tensor(nn::Shape shape, util::Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = util::uniform(rng, lo, hi);
  return t;
}

std::vector<std::vector<std::vector<double>>> nested(const std::vector<nn::Tensor>& ts) {
  std::vector<std::vector<std::vector<double>>> out;
  for (const auto& t : ts) {
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < t.dim(0); ++r) rows.emplace_back(t.row(r).begin(), t.row(r).end());
    out.push_back(rows);
  }
  return out;
}

}  // namespace

TEST_CASE("expected gradients of a linear function are exact against one baseline") {
  auto rng = util::make_rng(1);
  const auto a = random_tensor({4, 3}, rng);
  const explainer::GradientFn f = [&](const nn::Tensor& x, nn::Tensor& g) {
    g = a;
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += a[i] * x[i];
    return s;
  };
  const auto x = random_tensor({4, 3}, rng);
  const std::vector<nn::Tensor> bg{random_tensor({4, 3}, rng)};
  const auto phi = explainer::expected_gradients(f, x, bg, 10, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(phi[i] == doctest::Approx((x[i] - bg[0][i]) * a[i]).epsilon(1e-12));
}

TEST_CASE("expected gradients of a linear function converge to (x - mean background) * a") {
  auto rng = util::make_rng(2);
  const auto a = random_tensor({6, 8}, rng);
  const explainer::GradientFn f = [&](const nn::Tensor&, nn::Tensor& g) {
    g = a;
    return 0.0;
  };
  const auto x = random_tensor({6, 8}, rng, 2.0, 3.0);
  std::vector<nn::Tensor> bg;
  for (int i = 0; i < 32; ++i) bg.push_back(random_tensor({6, 8}, rng));
  nn::Tensor mean({6, 8});
  for (const auto& b : bg) {
    for (std::size_t i = 0; i < b.size(); ++i) mean[i] += b[i] / 32.0;
  }
  const auto phi = explainer::expected_gradients(f, x, bg, 5000, rng);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double expected = (x[i] - mean[i]) * a[i];
    CHECK(std::abs(phi[i] - expected) <= 0.02 * std::abs(x[i] - mean[i]) * std::abs(a[i]) + 1e-12);
  }
}

TEST_CASE("expected gradients share samples evenly across background rows") {
  auto rng = util::make_rng(4);
  const auto a = random_tensor({2, 3}, rng);
  const explainer::GradientFn f = [&](const nn::Tensor&, nn::Tensor& g) {
    g = a;
    return 0.0;
  };
  const auto x = random_tensor({2, 3}, rng);
  std::vector<nn::Tensor> bg;
  for (int i = 0; i < 5; ++i) bg.push_back(random_tensor({2, 3}, rng));
  // every row used equally often: the linear case is exact
  const auto phi = explainer::expected_gradients(f, x, bg, 15, rng);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0;
    for (const auto& b : bg) mean += b[i] / 5.0;
    CHECK(phi[i] == doctest::Approx((x[i] - mean) * a[i]).epsilon(1e-12));
  }
  // fewer samples than rows: the mean over some subset of rows
  const auto two = explainer::expected_gradients(f, x, bg, 2, rng);
  bool found = false;
  for (std::size_t p = 0; p < 5; ++p) {
    for (std::size_t q = p + 1; q < 5; ++q) {
      bool all = true;
      for (std::size_t i = 0; i < x.size(); ++i) {
        all = all && std::abs(two[i] - (x[i] - (bg[p][i] + bg[q][i]) / 2) * a[i]) < 1e-12;
      }
      found = found || all;
    }
  }
  CHECK(found);
}

TEST_CASE("expected gradients of a quadratic integrate the path") {
  // f = sum x^2 against one baseline b: attribution (x - b)(x + b) = x^2 - b^2
  auto rng = util::make_rng(3);
  const explainer::GradientFn f = [](const nn::Tensor& x, nn::Tensor& g) {
    g = nn::Tensor(x.shape());
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      g[i] = 2 * x[i];
      s += x[i] * x[i];
    }
    return s;
  };
  const auto x = random_tensor({5, 2}, rng);
  const std::vector<nn::Tensor> bg{random_tensor({5, 2}, rng)};
  const auto phi = explainer::expected_gradients(f, x, bg, 20000, rng);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::abs(phi[i] - (x[i] * x[i] - bg[0][i] * bg[0][i])) < 0.03 * (x[i] - bg[0][i]) * (x[i] - bg[0][i]) + 1e-3);
  }
}

TEST_CASE("squeeze denominators") {
  using explainer::SqueezeMode;
  // L = 10, w = 3: 1 | i | w | L - i
  const std::vector<double> eq{1, 2, 3, 3, 3, 3, 3, 2, 1, 1};
  const std::vector<double> cov{1, 2, 3, 3, 3, 3, 3, 3, 2, 1};
  for (std::size_t i = 1; i <= 10; ++i) {
    CHECK(explainer::squeeze_denominator(i, 10, 3, SqueezeMode::kEquation) == eq[i - 1]);
    CHECK(explainer::squeeze_denominator(i, 10, 3, SqueezeMode::kCoverage) == cov[i - 1]);
  }
  CHECK_THROWS_AS(explainer::squeeze_denominator(0, 10, 3, SqueezeMode::kEquation), Error);
}

TEST_CASE("squeeze matches the coverage-enumeration oracle and is linear") {
  auto rng = util::make_rng(4);
  for (auto [length, w] : {std::pair<std::size_t, std::size_t>{96, 6}, {10, 3}, {7, 7}, {12, 1}}) {
    std::vector<nn::Tensor> a, b, mix;
    for (std::size_t s = 0; s + w <= length; ++s) {
      a.push_back(random_tensor({w, 8}, rng));
      b.push_back(random_tensor({w, 8}, rng));
      nn::Tensor m({w, 8});
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = 2.5 * a.back()[i] - b.back()[i];
      mix.push_back(m);
    }
    const auto got = explainer::temporal_squeeze(a, length, w);
    const auto expected = oracle::squeeze(nested(a), length, w);
    const auto sb = explainer::temporal_squeeze(b, length, w);
    const auto sm = explainer::temporal_squeeze(mix, length, w);
    for (std::size_t i = 0; i < length; ++i) {
      for (std::size_t c = 0; c < 8; ++c) {
        CHECK(std::abs(got.at(i, c) - expected[i][c]) < 1e-12);
        CHECK(std::abs(sm.at(i, c) - (2.5 * got.at(i, c) - sb.at(i, c))) < 1e-12);
      }
    }
  }
  std::vector<nn::Tensor> ones(91, nn::Tensor({6, 8}, 1.0));
  const auto cov = explainer::temporal_squeeze(ones, 96, 6, explainer::SqueezeMode::kCoverage);
  for (double v : cov.values()) CHECK(v == 1.0);
  CHECK_THROWS_AS(explainer::temporal_squeeze(std::span(ones).first(90), 96, 6), Error);
}

TEST_CASE("exact shapley equals the permutation average and is efficient") {
  auto rng = util::make_rng(5);
  for (std::size_t k = 1; k <= 6; ++k) {
    std::vector<double> w(k * k);
    for (auto& v : w) v = util::uniform(rng, -1, 1);
    const auto f = [&](std::span<const double> z) {
      double s = 0;
      for (std::size_t i = 0; i < k; ++i) {
        s += std::sin(z[i]) * w[i];
        for (std::size_t j = i + 1; j < k; ++j) s += w[i * k + j] * z[i] * z[j] * (z[i] > 0 ? 1.0 : 0.3);
      }
      return s;
    };
    std::vector<double> x(k), bg(k);
    for (std::size_t i = 0; i < k; ++i) {
      x[i] = util::uniform(rng, -2, 2);
      bg[i] = util::uniform(rng, -2, 2);
    }
    const auto r = explainer::exact_shapley(f, x, bg);
    const auto expected = oracle::permutation_shapley([&](const std::vector<double>& z) { return f(z); }, x, bg);
    double total = 0;
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(r.values[i] == doctest::Approx(expected[i]).epsilon(1e-10));
      total += r.values[i];
    }
    CHECK(std::abs(total - (r.prediction - r.baseline)) < 1e-9);
    CHECK(r.prediction == f(x));
    CHECK(r.baseline == f(bg));
  }
  const std::vector<double> big(explainer::kMaxExactFeatures + 1, 0.0);
  CHECK_THROWS_AS(explainer::exact_shapley([](std::span<const double>) { return 0.0; }, big, big), Error);
}

TEST_CASE("player explanations are deterministic, thread-independent and round-trip") {
  const auto& t = fixture::trained();
  const auto verdicts = inspector::predict_match(t.bundle, t.test.matches.at(0));
  const auto& v = *std::find_if(verdicts.begin(), verdicts.end(), [](const auto& p) { return p.included; });
  explainer::ExplainOptions opts;
  opts.n_samples = 20;
  opts.seed = 3;
  ::setenv("AIMGUARD_THREADS", "1", 1);
  const auto doc = explainer::export_attribution(explainer::explain_player(t.bundle, v, opts));
  ::setenv("AIMGUARD_THREADS", "3", 1);
  const auto again = explainer::export_attribution(explainer::explain_player(t.bundle, v, opts));
  ::unsetenv("AIMGUARD_THREADS");
  CHECK(doc.dump() == again.dump());

  const auto parsed = explainer::parse_explanation(nlohmann::json::parse(doc.dump()));
  CHECK(parsed.match_id == v.match_id);
  CHECK(parsed.player_id == v.player_id);
  CHECK(parsed.model_version == t.bundle.model_version());
  REQUIRE(parsed.eliminations.size() == v.eliminations.size());
  const auto& e = parsed.eliminations[0];
  CHECK(e.elim_tick == v.windows[0].elim_tick());
  CHECK(e.score == v.eliminations[0].aggregated);
  REQUIRE(e.ticks.size() == 96);
  CHECK(e.ticks[63].eliminated);
  CHECK(e.ticks[0].t == v.windows[0].points[1].tick);
  CHECK(e.ticks[0].x == v.windows[0].points[1].x);

  // efficiency of the match-level decomposition
  double total = 0;
  for (double s : parsed.match.values) total += s;
  CHECK(std::abs(total - (parsed.match.prediction - parsed.match.baseline)) < 1e-9);
  CHECK(parsed.match.prediction == doctest::Approx(v.probability).epsilon(1e-15));
  CHECK(parsed.match.names == inspector::match_feature_names(t.bundle.config.mode));

  opts.seed = 4;
  const auto other = explainer::export_attribution(explainer::explain_player(t.bundle, v, opts));
  CHECK(other.dump() != doc.dump());
}

TEST_CASE("export rejects a mismatched attribution") {
  const auto& t = fixture::trained();
  const auto verdicts = inspector::predict_match(t.bundle, t.test.matches.at(0));
  const auto& v = *std::find_if(verdicts.begin(), verdicts.end(), [](const auto& p) { return p.included; });
  explainer::AttributionMatrix a;
  a.elimination_id = "nope";
  a.values = nn::Tensor({96, 8});
  CHECK_THROWS_AS(explainer::export_elimination(v.windows[0], a, 0.5), Error);
  a.elimination_id = explainer::elimination_id(v.match_id, v.player_id, v.windows[0].elim_tick());
  a.values = nn::Tensor({95, 8});
  CHECK_THROWS_AS(explainer::export_elimination(v.windows[0], a, 0.5), Error);
}
