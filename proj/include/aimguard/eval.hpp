#pragma once

// Detection metrics (plain and support-weighted), statistical baselines, and
// significance tests.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/features.hpp"
#include "aimguard/ingest.hpp"

namespace aimguard::eval {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  nlohmann::json to_json() const;
  bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const int> labels, std::span<const int> verdicts);

// Undefined ratios (zero denominator) are reported as 0 with degenerate = true.
struct Metric {
  double value = 0.0;
  bool degenerate = false;
};

struct MetricSet {
  Metric accuracy;
  Metric precision;
  Metric recall;
  Metric f1;
  Metric fpr;

  nlohmann::json to_json() const;
};

struct MetricReport {
  Confusion confusion;
  MetricSet plain;     // cheater class as positive
  MetricSet weighted;  // per-class metrics averaged with class-support weights
  nlohmann::json to_json() const;
};

MetricReport metrics(const Confusion& c);

// Square confusion matrix, rows = true class, columns = predicted class.
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

struct ClassMetrics {
  Metric precision;
  Metric recall;
  Metric f1;
  Metric fpr;
  std::size_t support = 0;
};

struct MulticlassReport {
  std::vector<ClassMetrics> per_class;
  MetricSet weighted;  // weighted.accuracy = correct / total
};

MulticlassReport multiclass_metrics(const ConfusionMatrix& matrix);

// ---------------------------------------------------------------------------
// Baselines

struct BaselineVerdict {
  std::string match_id;
  std::string player_id;
  bool skipped = false;
  std::string reason;
  double statistic = 0.0;
  bool verdict = false;
};

// hits / shots per player; verdict = accuracy > threshold.
std::vector<BaselineVerdict> th_hit_acc(const ingest::MatchRecord& match, double threshold);

// max over ticks of ||(a_x, a_y)|| per (match, player); verdict = statistic > threshold.
std::vector<BaselineVerdict> th_acc_a(std::span<const features::FeatureSeries> series, double threshold);

struct SweepPoint {
  double threshold = 0.0;
  Confusion confusion;
  double f1 = 0.0;
  double weighted_f1 = 0.0;
};

// Rule "statistic > threshold" at each candidate threshold.
std::vector<SweepPoint> threshold_sweep(std::span<const double> statistic, std::span<const int> labels,
                                        std::span<const double> thresholds);
// Candidates: every distinct statistic value plus one below the minimum.
// Returns the point with the highest weighted F1 (first on ties).
SweepPoint best_threshold(std::span<const double> statistic, std::span<const int> labels);

// th_AccA over labeled players (unlabeled series are ignored), evaluated at
// its best threshold on the same data.
struct BaselineStudy {
  std::vector<BaselineVerdict> players;
  std::vector<int> labels;
  SweepPoint best;
  MetricReport report;

  nlohmann::json to_json() const;
};

BaselineStudy study_acc_a(std::span<const features::FeatureSeries> series, const ingest::LabelTable& labels);

// ---------------------------------------------------------------------------
// Significance

struct ZTest {
  double z = 0.0;
  double p = 1.0;
  bool continuity_correction = false;
};

ZTest two_proportion_z(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2,
                       bool continuity_correction = false);

// Two-sided Fisher exact test on [[a, b], [c, d]]: sum of the probabilities
// of all tables with the same margins that are no more likely than the
// observed one.
double fisher_exact(std::size_t a, std::size_t b, std::size_t c, std::size_t d);

// ---------------------------------------------------------------------------
// Verdict files

struct LabeledVerdicts {
  std::vector<int> labels;
  std::vector<int> verdicts;
  std::vector<std::string> keys;  // "match/player"
  std::size_t unlabeled = 0;
  std::size_t excluded = 0;
};

// Joins verdict JSONL records with a label table; excluded players (null
// verdict) and players without labels are counted, not scored.
LabeledVerdicts join_verdicts(const std::vector<nlohmann::json>& records, const ingest::LabelTable& labels);
std::vector<nlohmann::json> read_jsonl(const std::string& path);

}  // namespace aimguard::eval
