#include <doctest.h>

#include <algorithm>

#include "aimguard/error.hpp"
#include "aimguard/inspector.hpp"
#include "fixtures.hpp"

using namespace aimguard;
using inspector::ForestConfig;

namespace {

struct Data {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

Data labeled_rows(std::size_t n, std::size_t f, std::uint64_t seed) {
  auto rng = util::make_rng(seed);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(f);
    for (auto& v : r) v = util::uniform(rng, 0.0, 1.0);
    const int y = r[0] + 0.5 * r[f - 1] + util::normal(rng, 0.0, 0.2) > 0.8 ? 1 : 0;
    d.rows.push_back(r);
    d.labels.push_back(y);
  }
  return d;
}

}  // namespace

TEST_CASE("root split of a full-feature unbootstrapped tree is the exhaustive Gini optimum") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto d = labeled_rows(60, 4, seed);
    ForestConfig cfg;
    cfg.n_trees = 1;
    cfg.bootstrap = false;
    cfg.max_features = 4;
    const auto forest = inspector::fit_forest(d.rows, d.labels, cfg, seed);
    const auto expected = oracle::best_gini_split(d.rows, d.labels);
    const auto& root = forest.trees.at(0).nodes.at(0);
    CHECK(root.feature == expected.feature);
    CHECK(root.threshold == doctest::Approx(expected.threshold).epsilon(1e-12));
    CHECK(forest.trees[0].depth() <= cfg.max_depth);
  }
}

TEST_CASE("a fully grown tree fits distinct training points") {
  const auto d = labeled_rows(40, 3, 7);
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.max_features = 3;
  cfg.max_depth = 64;
  const auto forest = inspector::fit_forest(d.rows, d.labels, cfg, 1);
  for (std::size_t i = 0; i < d.rows.size(); ++i) CHECK(forest.predict_proba(d.rows[i]) == d.labels[i]);
}

TEST_CASE("forest probabilities are averaged leaf fractions in [0, 1]") {
  const auto d = labeled_rows(200, 6, 3);
  const auto forest = inspector::fit_forest(d.rows, d.labels, ForestConfig{}, 9);
  CHECK(forest.trees.size() == 100);
  auto rng = util::make_rng(4);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> x(6);
    for (auto& v : x) v = util::uniform(rng, -1.0, 2.0);
    const double p = forest.predict_proba(x);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    double mean = 0.0;
    for (const auto& t : forest.trees) mean += t.predict(x);
    CHECK(p == doctest::Approx(mean / 100.0).epsilon(1e-14));
  }
}

TEST_CASE("forest fit ignores input row order and round-trips through json") {
  auto d = labeled_rows(80, 5, 11);
  const auto a = inspector::fit_forest(d.rows, d.labels, ForestConfig{}, 2);
  std::vector<std::size_t> perm(d.rows.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::reverse(perm.begin(), perm.end());
  Data shuffled;
  for (auto i : perm) {
    shuffled.rows.push_back(d.rows[i]);
    shuffled.labels.push_back(d.labels[i]);
  }
  const auto b = inspector::fit_forest(shuffled.rows, shuffled.labels, ForestConfig{}, 2);
  CHECK(a.to_json() == b.to_json());
  const auto c = inspector::Forest::from_json(nlohmann::json::parse(a.to_json().dump()));
  CHECK(c.to_json() == a.to_json());
  for (const auto& r : d.rows) CHECK(c.predict_proba(r) == a.predict_proba(r));
}

TEST_CASE("forest rejects single-class and ragged input") {
  const std::vector<std::vector<double>> rows{{1.0}, {2.0}};
  const std::vector<int> same{1, 1};
  CHECK_THROWS_AS(inspector::fit_forest(rows, same, ForestConfig{}, 0), Error);
  const std::vector<std::vector<double>> ragged{{1.0}, {2.0, 3.0}};
  const std::vector<int> mixed{0, 1};
  CHECK_THROWS_AS(inspector::fit_forest(ragged, mixed, ForestConfig{}, 0), Error);
}
