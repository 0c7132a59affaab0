#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "aimguard/error.hpp"
#include "aimguard/inspector.hpp"

namespace aimguard::inspector {

using features::kNumFeatures;

Normalizer Normalizer::identity() {
  Normalizer n;
  n.mean.fill(0.0);
  n.scale.fill(1.0);
  return n;
}

Normalizer Normalizer::fit(std::span<const features::FeatureSeries> series) {
  const Normalizer id = identity();
  std::array<double, kNumFeatures> sum{};
  std::size_t count = 0;
  for (const auto& s : series) {
    for (const auto& tuple : s.tuples) {
      const auto v = id.apply(tuple, s.elim_tick);
      for (std::size_t f = 0; f < kNumFeatures; ++f) sum[f] += v[f];
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::kEmptySlice, "normalizer needs at least one tuple");
  Normalizer n;
  for (std::size_t f = 0; f < kNumFeatures; ++f) n.mean[f] = sum[f] / static_cast<double>(count);
  std::array<double, kNumFeatures> sq{};
  for (const auto& s : series) {
    for (const auto& tuple : s.tuples) {
      const auto v = id.apply(tuple, s.elim_tick);
      for (std::size_t f = 0; f < kNumFeatures; ++f) sq[f] += (v[f] - n.mean[f]) * (v[f] - n.mean[f]);
    }
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const double sd = std::sqrt(sq[f] / static_cast<double>(count));
    n.scale[f] = sd > 1e-12 ? sd : 1.0;
  }
  return n;
}

features::FeatureVector Normalizer::apply(const features::FeatureTuple& tuple, std::int64_t elim_tick) const {
  auto v = tuple.as_array();
  v[features::kT] = static_cast<double>(tuple.t - elim_tick);
  for (std::size_t f = 0; f < kNumFeatures; ++f) v[f] = (v[f] - mean[f]) / scale[f];
  return v;
}

nlohmann::json Normalizer::to_json() const {
  return {{"mean", util::encode_doubles(mean)}, {"scale", util::encode_doubles(scale)}};
}

Normalizer Normalizer::from_json(const nlohmann::json& j) {
  Normalizer n;
  const auto m = util::decode_doubles(j.at("mean").get<std::string>());
  const auto s = util::decode_doubles(j.at("scale").get<std::string>());
  if (m.size() != kNumFeatures || s.size() != kNumFeatures) {
    throw Error(ErrorKind::kShapeMismatch, "normalizer must have one entry per channel");
  }
  std::copy(m.begin(), m.end(), n.mean.begin());
  std::copy(s.begin(), s.end(), n.scale.begin());
  return n;
}

nn::Tensor series_matrix(const features::FeatureSeries& series, const Normalizer& norm) {
  nn::Tensor out({series.size(), kNumFeatures});
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto v = norm.apply(series.tuples[i], series.elim_tick);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

SubsequenceBatch slide(const nn::Tensor& matrix, std::size_t w) {
  if (w == 0) throw Error(ErrorKind::kInvalidConfig, "window width must be positive");
  if (matrix.rank() != 2) throw Error(ErrorKind::kShapeMismatch, "slide expects a (L, F) matrix");
  const std::size_t len = matrix.dim(0);
  const std::size_t f = matrix.dim(1);
  if (len < w) {
    throw Error(ErrorKind::kSeriesShorterThanWindow, fmt::format("series of {} ticks, window {}", len, w));
  }
  SubsequenceBatch batch;
  batch.w = w;
  batch.windows.reserve(len - w + 1);
  for (std::size_t i = 0; i + w <= len; ++i) {
    const auto first = matrix.values().begin() + static_cast<std::ptrdiff_t>(i * f);
    batch.windows.emplace_back(nn::Shape{w, f}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(w * f)));
  }
  return batch;
}

SubsequenceBatch slide(const features::FeatureSeries& series, std::size_t w, const Normalizer& norm) {
  return slide(series_matrix(series, norm), w);
}

nlohmann::json default_subsequence_architecture() {
  return {{"layers",
           {{{"type", "gru"}, {"units", 32}},
            {{"type", "conv1d"}, {"filters", 32}, {"kernel", 3}},
            {{"type", "global_max_pool"}},
            {{"type", "dense"}, {"units", 16}},
            {{"type", "tanh"}},
            {{"type", "dense"}, {"units", 1}},
            {{"type", "sigmoid"}}}}};
}

nlohmann::json tiny_subsequence_architecture() {
  return {{"layers",
           {{{"type", "gru"}, {"units", 8}},
            {{"type", "conv1d"}, {"filters", 8}, {"kernel", 3}},
            {{"type", "global_max_pool"}},
            {{"type", "dense"}, {"units", 8}},
            {{"type", "tanh"}},
            {{"type", "dense"}, {"units", 1}},
            {{"type", "sigmoid"}}}}};
}

nlohmann::json default_aggregator_architecture() {
  return {{"layers",
           {{{"type", "dense"}, {"units", 32}},
            {{"type", "tanh"}},
            {{"type", "dropout"}, {"rate", 0.3}},
            {{"type", "dense"}, {"units", 16}},
            {{"type", "tanh"}},
            {{"type", "dense"}, {"units", 1}},
            {{"type", "sigmoid"}}}}};
}

nn::Model make_subsequence_model(const nlohmann::json& architecture, std::size_t w) {
  return nn::Model(architecture, {w, kNumFeatures});
}

nn::Model make_aggregator_model(const nlohmann::json& architecture, std::size_t count) {
  return nn::Model(architecture, {count});
}

std::vector<double> score_subsequences(const nn::Model& model, const nn::ParamSet& params,
                                       const SubsequenceBatch& batch) {
  std::vector<double> out;
  out.reserve(batch.count());
  for (const auto& x : batch.windows) {
    x.require_shape(model.input_shape(), "subsequence");
    out.push_back(model.predict(params, x));
  }
  return out;
}

double aggregate(const nn::Model& model, const nn::ParamSet& params, std::span<const double> per_subseq) {
  const std::size_t expected = model.input_shape().at(0);
  if (per_subseq.size() != expected) {
    throw Error(ErrorKind::kLengthMismatch,
                fmt::format("aggregator expects {} subsequence scores, got {}", expected, per_subseq.size()));
  }
  return model.predict(params, nn::Tensor({expected}, std::vector<double>(per_subseq.begin(), per_subseq.end())));
}

// ---------------------------------------------------------------------------

double f1_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) ++tp;
    if (pred && !labels[i]) ++fp;
    if (!pred && labels[i]) ++fn;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

ThresholdResult learn_threshold(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} scores vs {} labels", scores.size(), labels.size()));
  }
  std::size_t pos = 0;
  for (int y : labels) pos += y ? 1 : 0;
  if (pos == 0 || pos == labels.size()) throw Error(ErrorKind::kSingleClass, "threshold needs both classes");

  std::vector<double> distinct(scores.begin(), scores.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() == 1) {
    return {distinct[0], f1_at(scores, labels, distinct[0]), true};
  }

  // Region j covers thresholds (lo_j, hi_j]; every threshold inside predicts
  // the same labels as hi_j.
  struct Region {
    double lo, hi, f1;
  };
  std::vector<Region> regions;
  const double first = distinct.front();
  const double last = distinct.back();
  regions.push_back({std::min(0.0, first), first, f1_at(scores, labels, first)});
  for (std::size_t j = 0; j + 1 < distinct.size(); ++j) {
    regions.push_back({distinct[j], distinct[j + 1], f1_at(scores, labels, distinct[j + 1])});
  }
  regions.push_back({last, std::max(1.0, last), 0.0});

  const Region* best = &regions[0];
  for (const auto& r : regions) {
    if (r.f1 > best->f1 || (r.f1 == best->f1 && (r.hi - r.lo) > (best->hi - best->lo))) best = &r;
  }
  return {0.5 * (best->lo + best->hi), best->f1, false};
}

// ---------------------------------------------------------------------------

MatchMode parse_match_mode(std::string_view text) {
  if (text == "o" || text == "original") return MatchMode::kOriginal;
  if (text == "b" || text == "binary") return MatchMode::kBinary;
  if (text == "a" || text == "all") return MatchMode::kAll;
  throw Error(ErrorKind::kInvalidConfig, fmt::format("unknown match mode '{}'", text));
}

char match_mode_char(MatchMode mode) {
  switch (mode) {
    case MatchMode::kOriginal:
      return 'o';
    case MatchMode::kBinary:
      return 'b';
    case MatchMode::kAll:
      return 'a';
  }
  return 'o';
}

std::vector<std::string> match_feature_names(MatchMode mode) {
  std::vector<std::string> names;
  if (mode != MatchMode::kBinary) names = {"mean", "std", "min", "max", "count"};
  if (mode != MatchMode::kOriginal) names.push_back("fraction_above_threshold");
  return names;
}

std::vector<double> match_features(std::span<const double> scores, MatchMode mode, double threshold) {
  if (scores.empty()) throw Error(ErrorKind::kNoEliminations, "player has no scored eliminations");
  std::vector<double> out;
  if (mode != MatchMode::kBinary) {
    const double n = static_cast<double>(scores.size());
    double sum = 0.0;
    for (double s : scores) sum += s;
    const double mean = sum / n;
    double sq = 0.0;
    for (double s : scores) sq += (s - mean) * (s - mean);
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    out = {mean, scores.size() == 1 ? 0.0 : std::sqrt(sq / n), *lo, *hi, n};
  }
  if (mode != MatchMode::kOriginal) {
    std::size_t above = 0;
    for (double s : scores) above += s >= threshold ? 1 : 0;
    out.push_back(static_cast<double>(above) / static_cast<double>(scores.size()));
  }
  return out;
}

}  // namespace aimguard::inspector
