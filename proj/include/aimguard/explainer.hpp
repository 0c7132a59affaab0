#pragma once

// Attribution for both detector stages: expected gradients on the
// subsequence network squeezed back onto ticks, and exact coalition Shapley
// values for the forest's match-level vector.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/features.hpp"
#include "aimguard/inspector.hpp"
#include "aimguard/nn/tensor.hpp"
#include "aimguard/trajectory.hpp"
#include "aimguard/util.hpp"

namespace aimguard::explainer {

// Scalar function of a tensor; writes its gradient into `grad`.
using GradientFn = std::function<double(const nn::Tensor& x, nn::Tensor& grad)>;

GradientFn model_output(const nn::Model& model, const nn::ParamSet& params);

// Estimate of E over (b ~ background, alpha ~ U(0, 1)) of
// (x - b) * grad f(b + alpha (x - b)). Samples are split evenly across the
// background rows (a random subset when n_samples < rows) and alpha is
// stratified within each row's share; rows are weighted equally.
nn::Tensor expected_gradients(const GradientFn& f, const nn::Tensor& x, std::span<const nn::Tensor> background,
                              std::size_t n_samples, util::Rng& rng);

enum class SqueezeMode {
  kEquation,  // denominators as printed: 1 | i | w | L - i
  kCoverage,  // number of subsequences covering the tick
};

SqueezeMode parse_squeeze_mode(std::string_view text);
std::string_view squeeze_mode_name(SqueezeMode mode);

// Denominator for 1-based tick i of a length-L series.
double squeeze_denominator(std::size_t i, std::size_t length, std::size_t w, SqueezeMode mode);

// shap[s] is the (w, F) attribution of subsequence s (ticks s .. s+w-1);
// returns the (L, F) per-tick values.
nn::Tensor temporal_squeeze(std::span<const nn::Tensor> shap, std::size_t length, std::size_t w,
                            SqueezeMode mode = SqueezeMode::kEquation);

std::string elimination_id(std::string_view match_id, std::string_view player_id, std::int64_t elim_tick);

struct AttributionMatrix {
  std::string elimination_id;
  std::string model_version;
  nn::Tensor values;  // (m + n, F)
};

struct ExplainOptions {
  std::size_t n_samples = 200;  // per subsequence
  std::uint64_t seed = 0;
  SqueezeMode squeeze = SqueezeMode::kEquation;
};

// Per-subsequence expected gradients (target: that subsequence's score),
// squeezed onto ticks. Works in the bundle's normalized input space.
AttributionMatrix explain_elimination(const inspector::DetectorBundle& bundle, const features::FeatureSeries& series,
                                      const ExplainOptions& options);
AttributionMatrix explain_elimination(const inspector::DetectorBundle& bundle, const features::FeatureSeries& series,
                                      std::span<const nn::Tensor> background, const ExplainOptions& options);

struct MatchShapley {
  std::vector<std::string> names;
  std::vector<double> features;
  std::vector<double> values;
  double baseline = 0.0;    // f(background)
  double prediction = 0.0;  // f(x)
};

inline constexpr std::size_t kMaxExactFeatures = 12;

// Classical Shapley formula over all 2^k coalitions; absent features take
// the background value.
MatchShapley exact_shapley(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                           std::span<const double> background);
MatchShapley exact_shapley_match(const inspector::Forest& forest, std::span<const double> x,
                                 std::span<const double> background, std::vector<std::string> names = {});

// ---------------------------------------------------------------------------
// Explanation documents

inline constexpr int kSchemaVersion = 1;

// {elimination_id, elim_tick, score, ticks: [{t, x, y, fired, eliminated, values: {v_x, ...}}]}
nlohmann::json export_elimination(const trajectory::RawWindow& window, const AttributionMatrix& attribution,
                                  double score);

struct PlayerExplanation {
  std::string match_id;
  std::string player_id;
  std::string model_version;
  MatchShapley match;
  double threshold = 0.0;
  bool verdict = false;
  std::vector<nlohmann::json> eliminations;
};

nlohmann::json export_attribution(const PlayerExplanation& explanation);

struct ParsedTick {
  std::int64_t t = 0;
  double x = 0.0;
  double y = 0.0;
  bool fired = false;
  bool eliminated = false;
  features::FeatureVector values{};

  bool operator==(const ParsedTick&) const = default;
};

struct ParsedElimination {
  std::string elimination_id;
  std::int64_t elim_tick = 0;
  double score = 0.0;
  std::vector<ParsedTick> ticks;
};

struct ParsedExplanation {
  std::string match_id;
  std::string player_id;
  std::string model_version;
  MatchShapley match;
  double threshold = 0.0;
  bool verdict = false;
  std::vector<ParsedElimination> eliminations;
};

ParsedExplanation parse_explanation(const nlohmann::json& doc);

// Full explanation of one player's verdict; `n_samples` per subsequence.
PlayerExplanation explain_player(const inspector::DetectorBundle& bundle, const inspector::PlayerVerdict& verdict,
                                 const ExplainOptions& options);

}  // namespace aimguard::explainer
