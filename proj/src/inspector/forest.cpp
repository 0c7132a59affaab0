#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "aimguard/error.hpp"
#include "aimguard/inspector.hpp"

namespace aimguard::inspector {

namespace {

struct Sample {
  const std::vector<double>* x;
  int y;
};

double gini(std::size_t pos, std::size_t n) {
  if (n == 0) return 0.0;
  const double p = static_cast<double>(pos) / static_cast<double>(n);
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const ForestConfig& config, std::size_t n_features, std::size_t max_features, util::Rng& rng)
      : config_(config), n_features_(n_features), max_features_(max_features), rng_(rng) {}

  DecisionTree build(std::vector<Sample> samples) {
    tree_.nodes.clear();
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<Sample>& samples, std::size_t depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::size_t pos = 0;
    for (const auto& s : samples) pos += s.y ? 1 : 0;
    tree_.nodes[id].value = samples.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(samples.size());
    if (depth >= config_.max_depth || samples.size() < config_.min_samples_split || pos == 0 ||
        pos == samples.size()) {
      return id;
    }

    std::vector<std::size_t> feats(n_features_);
    std::iota(feats.begin(), feats.end(), 0);
    for (std::size_t i = 0; i < max_features_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_features_ - 1);
      std::swap(feats[i], feats[pick(rng_)]);
    }
    feats.resize(max_features_);

    double best_impurity = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    const std::size_t n = samples.size();
    for (std::size_t f : feats) {
      std::stable_sort(samples.begin(), samples.end(),
                       [f](const Sample& a, const Sample& b) { return (*a.x)[f] < (*b.x)[f]; });
      std::size_t left_pos = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_pos += samples[i].y ? 1 : 0;
        const double a = (*samples[i].x)[f];
        const double b = (*samples[i + 1].x)[f];
        if (!(a < b)) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = n - nl;
        const double imp = (static_cast<double>(nl) * gini(left_pos, nl) +
                            static_cast<double>(nr) * gini(pos - left_pos, nr)) /
                           static_cast<double>(n);
        if (imp < best_impurity) {
          best_impurity = imp;
          best_feature = static_cast<int>(f);
          best_threshold = a + 0.5 * (b - a);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Sample> left, right;
    for (const auto& s : samples) {
      ((*s.x)[static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();
    tree_.nodes[id].feature = best_feature;
    tree_.nodes[id].threshold = best_threshold;
    const int l = grow(left, depth + 1);
    tree_.nodes[id].left = l;
    const int r = grow(right, depth + 1);
    tree_.nodes[id].right = r;
    return id;
  }

  const ForestConfig& config_;
  std::size_t n_features_;
  std::size_t max_features_;
  util::Rng& rng_;
  DecisionTree tree_;
};

}  // namespace

nlohmann::json ForestConfig::to_json() const {
  return {{"n_trees", n_trees},
          {"max_depth", max_depth},
          {"min_samples_split", min_samples_split},
          {"bootstrap", bootstrap},
          {"max_features", max_features}};
}

ForestConfig ForestConfig::from_json(const nlohmann::json& j, const ForestConfig& defaults) {
  ForestConfig c = defaults;
  c.n_trees = j.value("n_trees", c.n_trees);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.min_samples_split = j.value("min_samples_split", c.min_samples_split);
  c.bootstrap = j.value("bootstrap", c.bootstrap);
  c.max_features = j.value("max_features", c.max_features);
  if (c.n_trees == 0) throw Error(ErrorKind::kInvalidConfig, "forest needs at least one tree");
  return c;
}

double DecisionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& node = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return nodes[i].value;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

double Forest::predict_proba(std::span<const double> x) const {
  if (x.size() != n_features) {
    throw Error(ErrorKind::kShapeMismatch, fmt::format("forest expects {} features, got {}", n_features, x.size()));
  }
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return trees.empty() ? 0.0 : sum / static_cast<double>(trees.size());
}

nlohmann::json Forest::to_json() const {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : trees) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      left.push_back(n.left);
      right.push_back(n.right);
      threshold.push_back(n.threshold);
      value.push_back(n.value);
    }
    ts.push_back({{"feature", feature},
                  {"left", left},
                  {"right", right},
                  {"threshold", util::encode_doubles(threshold)},
                  {"value", util::encode_doubles(value)}});
  }
  return {{"config", config.to_json()}, {"seed", seed}, {"n_features", n_features}, {"trees", ts}};
}

Forest Forest::from_json(const nlohmann::json& j) {
  Forest f;
  f.config = ForestConfig::from_json(j.at("config"), ForestConfig{});
  f.seed = j.at("seed").get<std::uint64_t>();
  f.n_features = j.at("n_features").get<std::size_t>();
  for (const auto& t : j.at("trees")) {
    const auto feature = t.at("feature").get<std::vector<int>>();
    const auto left = t.at("left").get<std::vector<int>>();
    const auto right = t.at("right").get<std::vector<int>>();
    const auto threshold = util::decode_doubles(t.at("threshold").get<std::string>());
    const auto value = util::decode_doubles(t.at("value").get<std::string>());
    DecisionTree tree;
    for (std::size_t i = 0; i < feature.size(); ++i) {
      tree.nodes.push_back({feature[i], threshold.at(i), left.at(i), right.at(i), value.at(i)});
    }
    f.trees.push_back(std::move(tree));
  }
  return f;
}

Forest fit_forest(std::span<const std::vector<double>> rows, std::span<const int> labels, const ForestConfig& config,
                  std::uint64_t seed) {
  if (rows.size() != labels.size()) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} rows vs {} labels", rows.size(), labels.size()));
  }
  std::size_t pos = 0;
  for (int y : labels) pos += y ? 1 : 0;
  if (pos == 0 || pos == labels.size()) throw Error(ErrorKind::kSingleClass, "forest needs both classes");
  const std::size_t nf = rows[0].size();
  for (const auto& r : rows) {
    if (r.size() != nf) throw Error(ErrorKind::kShapeMismatch, "forest rows differ in length");
  }
  if (nf == 0) throw Error(ErrorKind::kShapeMismatch, "forest rows are empty");

  // Canonical order first, so the seeded sampling below never sees the
  // caller's row order.
  std::vector<Sample> sorted;
  sorted.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) sorted.push_back({&rows[i], labels[i] ? 1 : 0});
  std::sort(sorted.begin(), sorted.end(), [](const Sample& a, const Sample& b) {
    if (*a.x != *b.x) return *a.x < *b.x;
    return a.y < b.y;
  });

  Forest forest;
  forest.config = config;
  forest.seed = seed;
  forest.n_features = nf;
  const std::size_t max_features =
      config.max_features > 0
          ? std::min(config.max_features, nf)
          : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(nf)))));
  for (std::size_t t = 0; t < config.n_trees; ++t) {
    util::Rng rng = util::make_rng(seed, {"tree", std::to_string(t)});
    std::vector<Sample> picked;
    if (config.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, sorted.size() - 1);
      picked.reserve(sorted.size());
      for (std::size_t i = 0; i < sorted.size(); ++i) picked.push_back(sorted[pick(rng)]);
    } else {
      picked = sorted;
    }
    TreeBuilder builder(config, nf, max_features, rng);
    forest.trees.push_back(builder.build(std::move(picked)));
  }
  return forest;
}

}  // namespace aimguard::inspector
