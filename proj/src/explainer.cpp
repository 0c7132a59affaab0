#include "aimguard/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "aimguard/error.hpp"

namespace aimguard::explainer {

using features::kNumFeatures;

GradientFn model_output(const nn::Model& model, const nn::ParamSet& params) {
  return [&model, &params](const nn::Tensor& x, nn::Tensor& grad) {
    return model.predict_with_input_gradient(params, x, grad);
  };
}

nn::Tensor expected_gradients(const GradientFn& f, const nn::Tensor& x, std::span<const nn::Tensor> background,
                              std::size_t n_samples, util::Rng& rng) {
  if (background.empty()) throw Error(ErrorKind::kEmptyBackground, "expected gradients need a background set");
  if (n_samples == 0) throw Error(ErrorKind::kInvalidConfig, "n_samples must be positive");
  for (const auto& b : background) b.require_shape(x.shape(), "background sample");
  const std::size_t rows = background.size();
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  nn::Tensor sum(x.shape());
  nn::Tensor row_sum(x.shape());
  nn::Tensor point(x.shape());
  nn::Tensor grad;
  std::size_t used = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t share = n_samples / rows + (r < n_samples % rows ? 1 : 0);
    if (share == 0) continue;
    ++used;
    const auto& b = background[order[r]];
    std::fill(row_sum.data().begin(), row_sum.data().end(), 0.0);
    for (std::size_t s = 0; s < share; ++s) {
      const double alpha = (static_cast<double>(s) + unit(rng)) / static_cast<double>(share);
      for (std::size_t i = 0; i < x.size(); ++i) point[i] = b[i] + alpha * (x[i] - b[i]);
      f(point, grad);
      for (std::size_t i = 0; i < x.size(); ++i) row_sum[i] += (x[i] - b[i]) * grad[i];
    }
    const double inv = 1.0 / static_cast<double>(share);
    for (std::size_t i = 0; i < x.size(); ++i) sum[i] += row_sum[i] * inv;
  }
  const double inv = 1.0 / static_cast<double>(used);
  for (double& v : sum.data()) v *= inv;
  return sum;
}

SqueezeMode parse_squeeze_mode(std::string_view text) {
  if (text == "equation") return SqueezeMode::kEquation;
  if (text == "coverage") return SqueezeMode::kCoverage;
  throw Error(ErrorKind::kInvalidConfig, fmt::format("unknown squeeze mode '{}'", text));
}

std::string_view squeeze_mode_name(SqueezeMode mode) {
  return mode == SqueezeMode::kCoverage ? "coverage" : "equation";
}

double squeeze_denominator(std::size_t i, std::size_t length, std::size_t w, SqueezeMode mode) {
  if (i < 1 || i > length) throw Error(ErrorKind::kRangeViolation, fmt::format("tick {} outside 1..{}", i, length));
  if (mode == SqueezeMode::kCoverage) {
    return static_cast<double>(std::min({i, w, length - i + 1, length - w + 1}));
  }
  if (i == 1 || i == length) return 1.0;
  if (i <= w) return static_cast<double>(i);
  if (i <= length - w) return static_cast<double>(w);
  return static_cast<double>(length - i);
}

nn::Tensor temporal_squeeze(std::span<const nn::Tensor> shap, std::size_t length, std::size_t w, SqueezeMode mode) {
  if (w == 0 || length < w || shap.size() != length - w + 1) {
    throw Error(ErrorKind::kShapeMismatch,
                fmt::format("{} subsequence attributions for L = {}, w = {}", shap.size(), length, w));
  }
  const std::size_t f = shap[0].rank() == 2 ? shap[0].dim(1) : 0;
  for (const auto& s : shap) s.require_shape({w, f}, "subsequence attribution");
  nn::Tensor out({length, f});
  for (std::size_t s = 0; s < shap.size(); ++s) {
    for (std::size_t j = 0; j < w; ++j) {
      auto dst = out.row(s + j);
      const auto src = shap[s].row(j);
      for (std::size_t c = 0; c < f; ++c) dst[c] += src[c];
    }
  }
  for (std::size_t i = 0; i < length; ++i) {
    const double d = squeeze_denominator(i + 1, length, w, mode);
    for (double& v : out.row(i)) v /= d;
  }
  return out;
}

std::string elimination_id(std::string_view match_id, std::string_view player_id, std::int64_t elim_tick) {
  return fmt::format("{}:{}:{}", match_id, player_id, elim_tick);
}

AttributionMatrix explain_elimination(const inspector::DetectorBundle& bundle, const features::FeatureSeries& series,
                                      const ExplainOptions& options) {
  return explain_elimination(bundle, series, bundle.background, options);
}

AttributionMatrix explain_elimination(const inspector::DetectorBundle& bundle, const features::FeatureSeries& series,
                                      std::span<const nn::Tensor> background, const ExplainOptions& options) {
  const auto batch = inspector::slide(series, bundle.config.w, bundle.normalizer);
  util::Rng rng = util::make_rng(options.seed, {"explain", series.match_id, series.player_id,
                                                std::to_string(series.elim_tick)});
  const auto f = model_output(bundle.subsequence_model, bundle.subsequence_params);
  std::vector<nn::Tensor> shap;
  shap.reserve(batch.count());
  for (const auto& x : batch.windows) shap.push_back(expected_gradients(f, x, background, options.n_samples, rng));
  AttributionMatrix out;
  out.elimination_id = elimination_id(series.match_id, series.player_id, series.elim_tick);
  out.model_version = bundle.model_version();
  out.values = temporal_squeeze(shap, series.size(), bundle.config.w, options.squeeze);
  return out;
}

MatchShapley exact_shapley(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                           std::span<const double> background) {
  const std::size_t k = x.size();
  if (background.size() != k) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} features vs {} background values", k, background.size()));
  }
  if (k > kMaxExactFeatures) {
    throw Error(ErrorKind::kTooManyFeatures, fmt::format("{} features exceed the exact limit {}", k, kMaxExactFeatures));
  }
  const std::size_t n_sets = std::size_t{1} << k;
  std::vector<double> value(n_sets);
  std::vector<double> z(k);
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    for (std::size_t j = 0; j < k; ++j) z[j] = (mask >> j) & 1 ? x[j] : background[j];
    value[mask] = f(z);
  }
  // weight(|S|) = |S|! (k - |S| - 1)! / k!
  std::vector<double> weight(k);
  for (std::size_t s = 0; s < k; ++s) {
    weight[s] = std::exp(std::lgamma(static_cast<double>(s + 1)) + std::lgamma(static_cast<double>(k - s)) -
                         std::lgamma(static_cast<double>(k + 1)));
  }
  MatchShapley out;
  out.features.assign(x.begin(), x.end());
  out.values.assign(k, 0.0);
  out.baseline = value[0];
  out.prediction = value[n_sets - 1];
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    for (std::size_t mask = 0; mask < n_sets; ++mask) {
      if (mask & bit) continue;
      out.values[j] += weight[static_cast<std::size_t>(__builtin_popcountll(mask))] * (value[mask | bit] - value[mask]);
    }
  }
  return out;
}

MatchShapley exact_shapley_match(const inspector::Forest& forest, std::span<const double> x,
                                 std::span<const double> background, std::vector<std::string> names) {
  auto out = exact_shapley([&forest](std::span<const double> z) { return forest.predict_proba(z); }, x, background);
  if (names.empty()) {
    for (std::size_t j = 0; j < x.size(); ++j) names.push_back(fmt::format("f{}", j));
  }
  if (names.size() != x.size()) throw Error(ErrorKind::kLengthMismatch, "feature names do not match the vector");
  out.names = std::move(names);
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json export_elimination(const trajectory::RawWindow& window, const AttributionMatrix& attribution,
                                  double score) {
  const auto id = elimination_id(window.match_id, window.player_id, window.elim_tick());
  if (id != attribution.elimination_id) {
    throw Error(ErrorKind::kIdMismatch, fmt::format("window {} vs attribution {}", id, attribution.elimination_id));
  }
  const std::size_t length = window.points.size() - 1;
  attribution.values.require_shape({length, kNumFeatures}, "attribution matrix");
  nlohmann::json ticks = nlohmann::json::array();
  for (std::size_t i = 0; i < length; ++i) {
    const auto& p = window.points[i + 1];
    nlohmann::json values = nlohmann::json::object();
    for (std::size_t c = 0; c < kNumFeatures; ++c) {
      values[std::string(features::kFeatureNames[c])] = attribution.values.at(i, c);
    }
    ticks.push_back({{"t", p.tick}, {"x", p.x}, {"y", p.y}, {"fired", p.fired}, {"eliminated", p.eliminated},
                     {"values", values}});
  }
  return {{"elimination_id", id}, {"elim_tick", window.elim_tick()}, {"score", score}, {"ticks", ticks}};
}

namespace {

nlohmann::json named(const std::vector<std::string>& names, const std::vector<double>& values) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = values.at(i);
  return out;
}

}  // namespace

nlohmann::json export_attribution(const PlayerExplanation& e) {
  const std::string prefix = e.match_id + ":" + e.player_id + ":";
  for (const auto& el : e.eliminations) {
    const auto id = el.at("elimination_id").get<std::string>();
    if (id.rfind(prefix, 0) != 0) {
      throw Error(ErrorKind::kIdMismatch, fmt::format("elimination {} does not belong to {}", id, prefix));
    }
  }
  nlohmann::json order = nlohmann::json::array();
  for (const auto& n : e.match.names) order.push_back(n);
  return {{"schema_version", kSchemaVersion},
          {"match_id", e.match_id},
          {"player_id", e.player_id},
          {"model_version", e.model_version},
          {"match",
           {{"feature_order", order},
            {"features", named(e.match.names, e.match.features)},
            {"shapley", named(e.match.names, e.match.values)},
            {"baseline", e.match.baseline},
            {"probability", e.match.prediction},
            {"threshold", e.threshold},
            {"verdict", e.verdict}}},
          {"eliminations", e.eliminations}};
}

ParsedExplanation parse_explanation(const nlohmann::json& doc) {
  if (doc.at("schema_version").get<int>() != kSchemaVersion) {
    throw Error(ErrorKind::kInvalidConfig, "unsupported explanation schema");
  }
  ParsedExplanation out;
  out.match_id = doc.at("match_id").get<std::string>();
  out.player_id = doc.at("player_id").get<std::string>();
  out.model_version = doc.at("model_version").get<std::string>();
  const auto& m = doc.at("match");
  out.match.names = m.at("feature_order").get<std::vector<std::string>>();
  for (const auto& n : out.match.names) {
    out.match.features.push_back(m.at("features").at(n).get<double>());
    out.match.values.push_back(m.at("shapley").at(n).get<double>());
  }
  out.match.baseline = m.at("baseline").get<double>();
  out.match.prediction = m.at("probability").get<double>();
  out.threshold = m.at("threshold").get<double>();
  out.verdict = m.at("verdict").get<bool>();
  for (const auto& el : doc.at("eliminations")) {
    ParsedElimination pe;
    pe.elimination_id = el.at("elimination_id").get<std::string>();
    pe.elim_tick = el.at("elim_tick").get<std::int64_t>();
    pe.score = el.at("score").get<double>();
    for (const auto& t : el.at("ticks")) {
      ParsedTick pt;
      pt.t = t.at("t").get<std::int64_t>();
      pt.x = t.at("x").get<double>();
      pt.y = t.at("y").get<double>();
      pt.fired = t.at("fired").get<bool>();
      pt.eliminated = t.at("eliminated").get<bool>();
      for (std::size_t c = 0; c < kNumFeatures; ++c) {
        pt.values[c] = t.at("values").at(std::string(features::kFeatureNames[c])).get<double>();
      }
      pe.ticks.push_back(pt);
    }
    out.eliminations.push_back(std::move(pe));
  }
  return out;
}

PlayerExplanation explain_player(const inspector::DetectorBundle& bundle, const inspector::PlayerVerdict& verdict,
                                 const ExplainOptions& options) {
  if (!verdict.included) {
    throw Error(ErrorKind::kNoEliminations, fmt::format("player {} has no scored eliminations", verdict.player_id));
  }
  PlayerExplanation out;
  out.match_id = verdict.match_id;
  out.player_id = verdict.player_id;
  out.model_version = bundle.model_version();
  out.threshold = verdict.threshold;
  out.verdict = verdict.verdict;
  out.match = exact_shapley_match(bundle.forest, verdict.match_vector, bundle.match_background,
                                  inspector::match_feature_names(bundle.config.mode));
  // Each elimination draws from its own RNG stream, so the split across
  // workers never changes the result.
  out.eliminations.resize(verdict.series.size());
  util::parallel_for(verdict.series.size(), [&](std::size_t i) {
    auto attribution = explain_elimination(bundle, verdict.series[i], options);
    attribution.model_version = out.model_version;
    out.eliminations[i] = export_elimination(verdict.windows[i], attribution, verdict.eliminations[i].aggregated);
  });
  return out;
}

}  // namespace aimguard::explainer
