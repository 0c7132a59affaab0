#include "aimguard/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "aimguard/error.hpp"
#include "aimguard/util.hpp"

namespace aimguard::eval {

namespace {

Metric ratio(double num, double den) {
  if (den == 0.0) return {0.0, true};
  return {num / den, false};
}

Metric harmonic(const Metric& p, const Metric& r) {
  if (p.degenerate || r.degenerate || p.value + r.value == 0.0) return {0.0, true};
  return {2.0 * p.value * r.value / (p.value + r.value), false};
}

nlohmann::json metric_json(const Metric& m) { return {{"value", m.value}, {"degenerate", m.degenerate}}; }

struct Weighted {
  double sum = 0.0;
  double weight = 0.0;
  bool degenerate = false;

  void add(const Metric& m, double w) {
    sum += w * m.value;
    weight += w;
    degenerate = degenerate || (w > 0.0 && m.degenerate);
  }
  Metric result() const { return weight == 0.0 ? Metric{0.0, true} : Metric{sum / weight, degenerate}; }
};

}  // namespace

nlohmann::json Confusion::to_json() const { return {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}}; }

Confusion confusion(std::span<const int> labels, std::span<const int> verdicts) {
  if (labels.size() != verdicts.size()) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} labels vs {} verdicts", labels.size(), verdicts.size()));
  }
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool y = labels[i] != 0;
    const bool p = verdicts[i] != 0;
    if (y && p) ++c.tp;
    if (!y && p) ++c.fp;
    if (!y && !p) ++c.tn;
    if (y && !p) ++c.fn;
  }
  return c;
}

nlohmann::json MetricSet::to_json() const {
  return {{"accuracy", metric_json(accuracy)},
          {"precision", metric_json(precision)},
          {"recall", metric_json(recall)},
          {"f1", metric_json(f1)},
          {"fpr", metric_json(fpr)}};
}

nlohmann::json MetricReport::to_json() const {
  return {{"confusion", confusion.to_json()}, {"plain", plain.to_json()}, {"weighted", weighted.to_json()}};
}

MetricReport metrics(const Confusion& c) {
  MetricReport r;
  r.confusion = c;
  r.weighted = multiclass_metrics({{c.tn, c.fp}, {c.fn, c.tp}}).weighted;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  r.plain.accuracy = ratio(d(c.tp + c.tn), d(c.total()));
  r.plain.precision = ratio(d(c.tp), d(c.tp + c.fp));
  r.plain.recall = ratio(d(c.tp), d(c.tp + c.fn));
  r.plain.f1 = harmonic(r.plain.precision, r.plain.recall);
  r.plain.fpr = ratio(d(c.fp), d(c.fp + c.tn));
  return r;
}

MulticlassReport multiclass_metrics(const ConfusionMatrix& matrix) {
  const std::size_t k = matrix.size();
  for (const auto& row : matrix) {
    if (row.size() != k) throw Error(ErrorKind::kShapeMismatch, "confusion matrix must be square");
  }
  std::vector<double> row_sum(k, 0.0), col_sum(k, 0.0);
  double total = 0.0;
  double correct = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double v = static_cast<double>(matrix[i][j]);
      row_sum[i] += v;
      col_sum[j] += v;
      total += v;
      if (i == j) correct += v;
    }
  }
  MulticlassReport r;
  Weighted wp, wr, wf, wfpr;
  for (std::size_t i = 0; i < k; ++i) {
    const double tp = static_cast<double>(matrix[i][i]);
    const double fp = col_sum[i] - tp;
    const double fn = row_sum[i] - tp;
    const double tn = total - tp - fp - fn;
    ClassMetrics cm;
    cm.support = static_cast<std::size_t>(row_sum[i]);
    cm.precision = ratio(tp, tp + fp);
    cm.recall = ratio(tp, tp + fn);
    cm.f1 = harmonic(cm.precision, cm.recall);
    cm.fpr = ratio(fp, fp + tn);
    wp.add(cm.precision, row_sum[i]);
    wr.add(cm.recall, row_sum[i]);
    wf.add(cm.f1, row_sum[i]);
    wfpr.add(cm.fpr, row_sum[i]);
    r.per_class.push_back(cm);
  }
  r.weighted.accuracy = ratio(correct, total);
  r.weighted.precision = wp.result();
  r.weighted.recall = wr.result();
  r.weighted.f1 = wf.result();
  r.weighted.fpr = wfpr.result();
  return r;
}

// ---------------------------------------------------------------------------

std::vector<BaselineVerdict> th_hit_acc(const ingest::MatchRecord& match, double threshold) {
  if (!match.has_hit_column()) {
    throw Error(ErrorKind::kMissingHitColumn, fmt::format("match {} has no hit column", match.match_id));
  }
  std::vector<BaselineVerdict> out;
  for (const auto& p : match.players) {
    BaselineVerdict v;
    v.match_id = match.match_id;
    v.player_id = p.player_id;
    std::size_t shots = 0, hits = 0;
    for (const auto& t : p.ticks) {
      if (!t.fired) continue;
      ++shots;
      hits += t.hit.value_or(false) ? 1 : 0;
    }
    if (shots == 0) {
      v.skipped = true;
      v.reason = to_string(ErrorKind::kNoShots);
    } else {
      v.statistic = static_cast<double>(hits) / static_cast<double>(shots);
      v.verdict = v.statistic > threshold;
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<BaselineVerdict> th_acc_a(std::span<const features::FeatureSeries> series, double threshold) {
  if (series.empty()) throw Error(ErrorKind::kNoWindows, "no feature windows");
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  std::vector<BaselineVerdict> out;
  for (const auto& s : series) {
    auto [it, fresh] = slot.emplace(std::make_pair(s.match_id, s.player_id), out.size());
    if (fresh) {
      out.emplace_back();
      out.back().match_id = s.match_id;
      out.back().player_id = s.player_id;
    }
    auto& v = out[it->second];
    for (const auto& t : s.tuples) v.statistic = std::max(v.statistic, std::hypot(t.a_x, t.a_y));
  }
  for (auto& v : out) v.verdict = v.statistic > threshold;
  return out;
}

std::vector<SweepPoint> threshold_sweep(std::span<const double> statistic, std::span<const int> labels,
                                        std::span<const double> thresholds) {
  if (statistic.size() != labels.size()) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} statistics vs {} labels", statistic.size(), labels.size()));
  }
  std::vector<SweepPoint> out;
  std::vector<int> verdicts(statistic.size());
  for (double t : thresholds) {
    for (std::size_t i = 0; i < statistic.size(); ++i) verdicts[i] = statistic[i] > t ? 1 : 0;
    SweepPoint p;
    p.threshold = t;
    p.confusion = confusion(labels, verdicts);
    const auto m = metrics(p.confusion);
    p.f1 = m.plain.f1.value;
    p.weighted_f1 = m.weighted.f1.value;
    out.push_back(p);
  }
  return out;
}

SweepPoint best_threshold(std::span<const double> statistic, std::span<const int> labels) {
  if (statistic.empty()) throw Error(ErrorKind::kEmptySlice, "no statistics to sweep");
  std::vector<double> candidates(statistic.begin(), statistic.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.insert(candidates.begin(), candidates.front() - 1.0);
  const auto sweep = threshold_sweep(statistic, labels, candidates);
  const SweepPoint* best = &sweep.front();
  for (const auto& p : sweep) {
    if (p.weighted_f1 > best->weighted_f1) best = &p;
  }
  return *best;
}

nlohmann::json BaselineStudy::to_json() const {
  return {{"baseline", "th_acc_a"},
          {"players", players.size()},
          {"threshold", best.threshold},
          {"metrics", report.to_json()}};
}

BaselineStudy study_acc_a(std::span<const features::FeatureSeries> series, const ingest::LabelTable& labels) {
  std::vector<features::FeatureSeries> labeled;
  for (const auto& s : series) {
    if (labels.contains({s.match_id, s.player_id})) labeled.push_back(s);
  }
  BaselineStudy out;
  out.players = th_acc_a(labeled, 0.0);
  std::vector<double> stats;
  for (const auto& p : out.players) {
    stats.push_back(p.statistic);
    out.labels.push_back(labels.at({p.match_id, p.player_id}) ? 1 : 0);
  }
  out.best = best_threshold(stats, out.labels);
  for (auto& p : out.players) p.verdict = p.statistic > out.best.threshold;
  out.report = metrics(out.best.confusion);
  return out;
}

// ---------------------------------------------------------------------------

ZTest two_proportion_z(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2, bool continuity_correction) {
  if (n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2) {
    throw Error(ErrorKind::kRangeViolation, fmt::format("invalid proportions {}/{} and {}/{}", x1, n1, x2, n2));
  }
  const double a = static_cast<double>(n1);
  const double b = static_cast<double>(n2);
  const double pooled = static_cast<double>(x1 + x2) / (a + b);
  if (pooled <= 0.0 || pooled >= 1.0) {
    throw Error(ErrorKind::kDegeneratePool, "pooled proportion is 0 or 1");
  }
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / a + 1.0 / b));
  double diff = static_cast<double>(x1) / a - static_cast<double>(x2) / b;
  if (continuity_correction) {
    const double cc = 0.5 * (1.0 / a + 1.0 / b);
    diff = std::copysign(std::max(0.0, std::abs(diff) - cc), diff);
  }
  ZTest out;
  out.z = diff / se;
  out.p = std::erfc(std::abs(out.z) / std::sqrt(2.0));
  out.continuity_correction = continuity_correction;
  return out;
}

double fisher_exact(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  const std::size_t r1 = a + b;
  const std::size_t r2 = c + d;
  const std::size_t c1 = a + c;
  const std::size_t n = r1 + r2;
  if (n == 0) throw Error(ErrorKind::kRangeViolation, "empty contingency table");
  const auto lchoose = [](std::size_t nn, std::size_t kk) {
    return std::lgamma(static_cast<double>(nn) + 1.0) - std::lgamma(static_cast<double>(kk) + 1.0) -
           std::lgamma(static_cast<double>(nn - kk) + 1.0);
  };
  const auto log_p = [&](std::size_t x) { return lchoose(r1, x) + lchoose(r2, c1 - x) - lchoose(n, c1); };
  const double observed = std::exp(log_p(a));
  const std::size_t lo = c1 > r2 ? c1 - r2 : 0;
  const std::size_t hi = std::min(r1, c1);
  double p = 0.0;
  for (std::size_t x = lo; x <= hi; ++x) {
    const double px = std::exp(log_p(x));
    if (px <= observed * (1.0 + 1e-7)) p += px;
  }
  return std::min(1.0, p);
}

// ---------------------------------------------------------------------------

LabeledVerdicts join_verdicts(const std::vector<nlohmann::json>& records, const ingest::LabelTable& labels) {
  LabeledVerdicts out;
  for (const auto& r : records) {
    const auto match = r.at("match_id").get<std::string>();
    const auto player = r.at("player_id").get<std::string>();
    if (r.at("verdict").is_null()) {
      ++out.excluded;
      continue;
    }
    const auto it = labels.find({match, player});
    if (it == labels.end()) {
      ++out.unlabeled;
      continue;
    }
    out.labels.push_back(it->second ? 1 : 0);
    out.verdicts.push_back(r.at("verdict").get<bool>() ? 1 : 0);
    out.keys.push_back(match + "/" + player);
  }
  return out;
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path));
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (util::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRow(n, e.what());
    }
  }
  return out;
}

}  // namespace aimguard::eval
