#pragma once

// Two-stage detector: a GRU/CNN stack scores every w-tick subsequence of an
// elimination window, a small dense network aggregates the subsequence scores
// into one elimination probability, and a random forest turns per-player
// statistics of those probabilities into a match verdict.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/features.hpp"
#include "aimguard/ingest.hpp"
#include "aimguard/nn/model.hpp"
#include "aimguard/nn/trainer.hpp"
#include "aimguard/trajectory.hpp"

namespace aimguard::inspector {

// ---------------------------------------------------------------------------
// Model inputs

// Per-channel affine map applied before the subsequence network. The tick
// channel is first made relative to the elimination tick.
struct Normalizer {
  features::FeatureVector mean{};
  features::FeatureVector scale{};

  static Normalizer identity();
  static Normalizer fit(std::span<const features::FeatureSeries> series);
  features::FeatureVector apply(const features::FeatureTuple& tuple, std::int64_t elim_tick) const;

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& j);
  bool operator==(const Normalizer&) const = default;
};

// (L, F) matrix of normalized feature tuples.
nn::Tensor series_matrix(const features::FeatureSeries& series, const Normalizer& norm);

struct SubsequenceBatch {
  std::size_t w = 0;
  std::vector<nn::Tensor> windows;  // each (w, F)

  std::size_t count() const { return windows.size(); }
};

// Stride-1 windows: batch[i] = rows [i, i + w).
SubsequenceBatch slide(const nn::Tensor& matrix, std::size_t w);
SubsequenceBatch slide(const features::FeatureSeries& series, std::size_t w,
                       const Normalizer& norm = Normalizer::identity());

// ---------------------------------------------------------------------------
// Architectures

nlohmann::json default_subsequence_architecture();
// Reduced stack (< 2,000 parameters at w = 6, F = 8) for gradient checks.
nlohmann::json tiny_subsequence_architecture();
nlohmann::json default_aggregator_architecture();

nn::Model make_subsequence_model(const nlohmann::json& architecture, std::size_t w);
nn::Model make_aggregator_model(const nlohmann::json& architecture, std::size_t count);

std::vector<double> score_subsequences(const nn::Model& model, const nn::ParamSet& params,
                                       const SubsequenceBatch& batch);
double aggregate(const nn::Model& model, const nn::ParamSet& params, std::span<const double> per_subseq);

// ---------------------------------------------------------------------------
// Dynamic threshold

struct ThresholdResult {
  double threshold = 0.5;
  double f1 = 0.0;
  bool degenerate = false;
};

// F1 of the rule "positive iff score >= threshold".
double f1_at(std::span<const double> scores, std::span<const int> labels, double threshold);
ThresholdResult learn_threshold(std::span<const double> scores, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Match-level vectors

enum class MatchMode { kOriginal, kBinary, kAll };

MatchMode parse_match_mode(std::string_view text);
char match_mode_char(MatchMode mode);
std::vector<std::string> match_feature_names(MatchMode mode);
// 'o': [mean, std, min, max, count]; 'b': [fraction >= threshold]; 'a': both.
std::vector<double> match_features(std::span<const double> elimination_scores, MatchMode mode, double threshold);

// ---------------------------------------------------------------------------
// Random forest

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;
  std::size_t min_samples_split = 2;
  bool bootstrap = true;
  std::size_t max_features = 0;  // 0 = floor(sqrt(F)), at least 1

  nlohmann::json to_json() const;
  static ForestConfig from_json(const nlohmann::json& j, const ForestConfig& defaults);
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // positive-class fraction of the training samples reaching the node
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  std::size_t depth() const;
};

struct Forest {
  ForestConfig config;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;
  std::vector<DecisionTree> trees;

  double predict_proba(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& j);
};

Forest fit_forest(std::span<const std::vector<double>> rows, std::span<const int> labels, const ForestConfig& config,
                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Bundle

struct PipelineConfig {
  trajectory::WindowSpec window;
  trajectory::ScreenSize screen;
  std::size_t w = 6;
  MatchMode mode = MatchMode::kOriginal;
  nlohmann::json subsequence_architecture = default_subsequence_architecture();
  nlohmann::json aggregator_architecture = default_aggregator_architecture();
  nn::TrainingConfig subsequence_training;
  nn::TrainingConfig aggregator_training;
  ForestConfig forest;
  double verdict_cut = 0.5;
  std::size_t background_size = 64;
  std::uint64_t seed = 0;

  std::size_t series_length() const { return static_cast<std::size_t>(window.length()); }
  std::size_t subsequence_count() const { return series_length() - w + 1; }

  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static PipelineConfig from_json(const nlohmann::json& j);
};

struct DetectorBundle {
  static constexpr int kFormatVersion = 1;

  PipelineConfig config;
  nn::Model subsequence_model;
  nn::ParamSet subsequence_params;
  nn::Adam subsequence_optimizer;
  nn::Model aggregator_model;
  nn::ParamSet aggregator_params;
  nn::Adam aggregator_optimizer;
  Normalizer normalizer;
  ThresholdResult threshold;
  Forest forest;
  std::vector<nn::Tensor> background;  // normalized (w, F) subsequences
  std::vector<double> match_background;
  nlohmann::json history;

  std::string model_version() const;

  nlohmann::json to_json() const;
  static DetectorBundle from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static DetectorBundle load(const std::filesystem::path& path);
};

// ---------------------------------------------------------------------------
// Inference

struct EliminationScore {
  std::string match_id;
  std::string player_id;
  std::int64_t elim_tick = 0;
  std::vector<double> per_subseq;
  double aggregated = 0.0;
};

EliminationScore score_elimination(const DetectorBundle& bundle, const features::FeatureSeries& series);

struct PlayerVerdict {
  std::string match_id;
  std::string player_id;
  bool included = true;
  std::string reason;  // why a player was excluded
  bool verdict = false;
  double probability = 0.0;
  double threshold = 0.0;
  std::vector<double> match_vector;
  std::vector<EliminationScore> eliminations;
  std::vector<features::FeatureSeries> series;
  std::vector<trajectory::RawWindow> windows;
  trajectory::CleansingReport cleansing;

  std::vector<double> elimination_scores() const;
  nlohmann::json to_json() const;  // verdict JSONL record
};

std::vector<PlayerVerdict> predict_match(const DetectorBundle& bundle, const ingest::MatchRecord& match);

// ---------------------------------------------------------------------------
// Training

// Accepted elimination windows of labeled players, in input order.
struct EliminationDataset {
  std::vector<features::FeatureSeries> series;
  std::vector<trajectory::RawWindow> windows;
  std::vector<int> labels;
  trajectory::CleansingReport cleansing;
};

EliminationDataset build_dataset(std::span<const ingest::MatchRecord> matches, const PipelineConfig& config);

// Lazy view of every subsequence of every series: index = series * count + offset.
class SubsequenceSource final : public nn::SampleSource {
 public:
  SubsequenceSource(std::vector<nn::Tensor> matrices, std::vector<int> labels, std::size_t w);
  std::size_t size() const override { return matrices_.size() * per_series_; }
  int label(std::size_t i) const override { return labels_[i / per_series_]; }
  void fill(std::size_t i, nn::Tensor& x) const override;

 private:
  std::vector<nn::Tensor> matrices_;
  std::vector<int> labels_;
  std::size_t w_;
  std::size_t per_series_;
};

using Logger = std::function<void(const std::string&)>;

DetectorBundle train_pipeline(std::span<const ingest::MatchRecord> train, std::span<const ingest::MatchRecord> val,
                              const PipelineConfig& config, const Logger& log = {});

}  // namespace aimguard::inspector
