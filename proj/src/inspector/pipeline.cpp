#include <algorithm>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "aimguard/error.hpp"
#include "aimguard/inspector.hpp"

namespace aimguard::inspector {

namespace {

nlohmann::json cleansing_json(const trajectory::CleansingReport& r) {
  return {{"eliminations", r.eliminations},
          {"accepted", r.accepted},
          {"truncated", r.truncated},
          {"glitch_missing", r.glitch_missing},
          {"glitch_duplicate", r.glitch_duplicate}};
}

nlohmann::json network_json(const nn::Model& model, const nn::ParamSet& params, const nn::Adam& opt) {
  return {{"model", model.to_json()}, {"params", params.to_json()}, {"optimizer", opt.to_json()}};
}

// Per-series subsequence scores laid out as series * count + offset.
std::vector<std::vector<double>> reshape_scores(const std::vector<double>& flat, std::size_t per_series) {
  std::vector<std::vector<double>> out(flat.size() / per_series);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].assign(flat.begin() + static_cast<std::ptrdiff_t>(i * per_series),
                  flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * per_series));
  }
  return out;
}

}  // namespace

nlohmann::json PipelineConfig::to_json() const {
  return {{"window", {{"m", window.m}, {"n", window.n}}},
          {"screen", {{"width", screen.width}, {"height", screen.height}}},
          {"w", w},
          {"mode", std::string(1, match_mode_char(mode))},
          {"subsequence_architecture", subsequence_architecture},
          {"aggregator_architecture", aggregator_architecture},
          {"subsequence_training", subsequence_training.to_json()},
          {"aggregator_training", aggregator_training.to_json()},
          {"forest", forest.to_json()},
          {"verdict_cut", verdict_cut},
          {"background_size", background_size},
          {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  if (j.contains("window")) {
    c.window.m = j["window"].value("m", c.window.m);
    c.window.n = j["window"].value("n", c.window.n);
  }
  if (j.contains("screen")) {
    c.screen.width = j["screen"].value("width", c.screen.width);
    c.screen.height = j["screen"].value("height", c.screen.height);
  }
  c.w = j.value("w", c.w);
  if (j.contains("mode")) c.mode = parse_match_mode(j["mode"].get<std::string>());
  if (j.contains("subsequence_architecture")) c.subsequence_architecture = j["subsequence_architecture"];
  if (j.contains("aggregator_architecture")) c.aggregator_architecture = j["aggregator_architecture"];
  if (j.contains("subsequence_training")) {
    c.subsequence_training = nn::TrainingConfig::from_json(j["subsequence_training"], c.subsequence_training);
  }
  if (j.contains("aggregator_training")) {
    c.aggregator_training = nn::TrainingConfig::from_json(j["aggregator_training"], c.aggregator_training);
  }
  if (j.contains("forest")) c.forest = ForestConfig::from_json(j["forest"], c.forest);
  c.verdict_cut = j.value("verdict_cut", c.verdict_cut);
  c.background_size = j.value("background_size", c.background_size);
  c.seed = j.value("seed", c.seed);
  if (c.w == 0 || c.w > c.series_length()) {
    throw Error(ErrorKind::kInvalidConfig, fmt::format("w = {} does not fit m + n = {}", c.w, c.series_length()));
  }
  return c;
}

// ---------------------------------------------------------------------------

std::string DetectorBundle::model_version() const {
  const std::string blob = subsequence_params.to_json().dump() + aggregator_params.to_json().dump() +
                           forest.to_json().dump() + normalizer.to_json().dump() +
                           util::format_fixed(threshold.threshold, 17);
  return util::sha256_hex(blob).substr(0, 12);
}

nlohmann::json DetectorBundle::to_json() const {
  nlohmann::json bg = nlohmann::json::array();
  for (const auto& t : background) bg.push_back(util::encode_doubles(t.data()));
  return {{"format_version", kFormatVersion},
          {"model_version", model_version()},
          {"config", config.to_json()},
          {"subsequence", network_json(subsequence_model, subsequence_params, subsequence_optimizer)},
          {"aggregator", network_json(aggregator_model, aggregator_params, aggregator_optimizer)},
          {"normalizer", normalizer.to_json()},
          {"threshold",
           {{"value", util::encode_doubles(std::vector<double>{threshold.threshold})},
            {"f1", threshold.f1},
            {"degenerate", threshold.degenerate}}},
          {"forest", forest.to_json()},
          {"background", bg},
          {"match_background", util::encode_doubles(match_background)},
          {"history", history}};
}

DetectorBundle DetectorBundle::from_json(const nlohmann::json& j) {
  const int version = j.at("format_version").get<int>();
  if (version != kFormatVersion) {
    throw Error(ErrorKind::kInvalidConfig, fmt::format("unsupported checkpoint format {}", version));
  }
  DetectorBundle b;
  b.config = PipelineConfig::from_json(j.at("config"));
  const auto& s = j.at("subsequence");
  b.subsequence_model = nn::Model::from_json(s.at("model"));
  b.subsequence_params = nn::ParamSet::from_json(s.at("params"));
  b.subsequence_optimizer = nn::Adam::from_json(s.at("optimizer"));
  const auto& a = j.at("aggregator");
  b.aggregator_model = nn::Model::from_json(a.at("model"));
  b.aggregator_params = nn::ParamSet::from_json(a.at("params"));
  b.aggregator_optimizer = nn::Adam::from_json(a.at("optimizer"));
  b.normalizer = Normalizer::from_json(j.at("normalizer"));
  const auto& t = j.at("threshold");
  b.threshold.threshold = util::decode_doubles(t.at("value").get<std::string>()).at(0);
  b.threshold.f1 = t.at("f1").get<double>();
  b.threshold.degenerate = t.at("degenerate").get<bool>();
  b.forest = Forest::from_json(j.at("forest"));
  const nn::Shape bg_shape{b.config.w, features::kNumFeatures};
  for (const auto& e : j.at("background")) {
    b.background.emplace_back(bg_shape, util::decode_doubles(e.get<std::string>()));
  }
  b.match_background = util::decode_doubles(j.at("match_background").get<std::string>());
  b.history = j.value("history", nlohmann::json::object());
  return b;
}

void DetectorBundle::save(const std::filesystem::path& path) const { util::write_file(path, to_json().dump()); }

DetectorBundle DetectorBundle::load(const std::filesystem::path& path) {
  const auto text = util::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, fmt::format("{}: not a checkpoint ({})", path.string(), e.what()));
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------

EliminationScore score_elimination(const DetectorBundle& bundle, const features::FeatureSeries& series) {
  EliminationScore out;
  out.match_id = series.match_id;
  out.player_id = series.player_id;
  out.elim_tick = series.elim_tick;
  const auto batch = slide(series, bundle.config.w, bundle.normalizer);
  out.per_subseq = score_subsequences(bundle.subsequence_model, bundle.subsequence_params, batch);
  out.aggregated = aggregate(bundle.aggregator_model, bundle.aggregator_params, out.per_subseq);
  return out;
}

std::vector<double> PlayerVerdict::elimination_scores() const {
  std::vector<double> out;
  out.reserve(eliminations.size());
  for (const auto& e : eliminations) out.push_back(e.aggregated);
  return out;
}

nlohmann::json PlayerVerdict::to_json() const {
  nlohmann::json j = {{"match_id", match_id}, {"player_id", player_id}};
  if (!included) {
    j["verdict"] = nullptr;
    j["excluded"] = reason;
    return j;
  }
  nlohmann::json ticks = nlohmann::json::array();
  for (const auto& e : eliminations) ticks.push_back(e.elim_tick);
  j["verdict"] = verdict;
  j["probability"] = probability;
  j["elimination_scores"] = elimination_scores();
  j["elimination_ticks"] = ticks;
  j["threshold"] = threshold;
  return j;
}

std::vector<PlayerVerdict> predict_match(const DetectorBundle& bundle, const ingest::MatchRecord& match) {
  std::vector<PlayerVerdict> out;
  for (const auto& stream : match.players) {
    PlayerVerdict v;
    v.match_id = match.match_id;
    v.player_id = stream.player_id;
    v.threshold = bundle.threshold.threshold;
    try {
      auto extraction = trajectory::extract_windows(stream, match.match_id, bundle.config.window, bundle.config.screen);
      v.cleansing = extraction.report;
      if (extraction.report.no_elimination_player) {
        v.included = false;
        v.reason = "no_eliminations";
      } else if (extraction.windows.empty()) {
        v.included = false;
        v.reason = "no_valid_windows";
      } else {
        for (auto& w : extraction.windows) {
          v.series.push_back(features::compute_features(w));
          v.eliminations.push_back(score_elimination(bundle, v.series.back()));
        }
        v.windows = std::move(extraction.windows);
        v.match_vector = match_features(v.elimination_scores(), bundle.config.mode, bundle.threshold.threshold);
        v.probability = bundle.forest.predict_proba(v.match_vector);
        v.verdict = v.probability >= bundle.config.verdict_cut;
      }
    } catch (const Error& e) {
      v = PlayerVerdict{};
      v.match_id = match.match_id;
      v.player_id = stream.player_id;
      v.included = false;
      v.reason = fmt::format("{}: {}", to_string(e.kind()), e.what());
    }
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

EliminationDataset build_dataset(std::span<const ingest::MatchRecord> matches, const PipelineConfig& config) {
  EliminationDataset out;
  for (const auto& match : matches) {
    for (const auto& stream : match.players) {
      const auto label = match.label(stream.player_id);
      if (!label) continue;
      auto extraction = trajectory::extract_windows(stream, match.match_id, config.window, config.screen);
      out.cleansing += extraction.report;
      for (auto& w : extraction.windows) {
        out.series.push_back(features::compute_features(w));
        out.labels.push_back(*label ? 1 : 0);
        out.windows.push_back(std::move(w));
      }
    }
  }
  return out;
}

SubsequenceSource::SubsequenceSource(std::vector<nn::Tensor> matrices, std::vector<int> labels, std::size_t w)
    : matrices_(std::move(matrices)), labels_(std::move(labels)), w_(w), per_series_(0) {
  if (matrices_.size() != labels_.size()) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} series vs {} labels", matrices_.size(), labels_.size()));
  }
  if (!matrices_.empty()) {
    const std::size_t len = matrices_[0].dim(0);
    if (len < w_) throw Error(ErrorKind::kSeriesShorterThanWindow, fmt::format("series of {} ticks, window {}", len, w_));
    per_series_ = len - w_ + 1;
    for (const auto& m : matrices_) {
      if (m.dim(0) != len) throw Error(ErrorKind::kShapeMismatch, "series lengths differ");
    }
  }
}

void SubsequenceSource::fill(std::size_t i, nn::Tensor& x) const {
  const auto& m = matrices_[i / per_series_];
  const std::size_t offset = i % per_series_;
  const std::size_t f = m.dim(1);
  const auto src = m.data().subspan(offset * f, w_ * f);
  std::copy(src.begin(), src.end(), x.data().begin());
}

DetectorBundle train_pipeline(std::span<const ingest::MatchRecord> train, std::span<const ingest::MatchRecord> val,
                              const PipelineConfig& config, const Logger& log) {
  const auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  auto train_set = build_dataset(train, config);
  auto val_set = build_dataset(val, config);
  say(fmt::format("train: {} eliminations ({} rejected); val: {} eliminations ({} rejected)", train_set.series.size(),
                  train_set.cleansing.rejected(), val_set.series.size(), val_set.cleansing.rejected()));
  if (train_set.series.empty() || val_set.series.empty()) {
    throw Error(ErrorKind::kEmptySlice, "no usable eliminations in train or validation split");
  }

  DetectorBundle bundle;
  bundle.config = config;
  bundle.normalizer = Normalizer::fit(train_set.series);
  const std::size_t count = config.subsequence_count();

  const auto matrices = [&](const EliminationDataset& d) {
    std::vector<nn::Tensor> out;
    out.reserve(d.series.size());
    for (const auto& s : d.series) out.push_back(series_matrix(s, bundle.normalizer));
    return out;
  };
  const SubsequenceSource train_src(matrices(train_set), train_set.labels, config.w);
  const SubsequenceSource val_src(matrices(val_set), val_set.labels, config.w);

  // Stage 1: subsequence network.
  bundle.subsequence_model = make_subsequence_model(config.subsequence_architecture, config.w);
  auto sub_cfg = config.subsequence_training;
  sub_cfg.seed = util::derive_seed(config.seed, {"subsequence-training"});
  auto sub = nn::train_network(bundle.subsequence_model,
                               bundle.subsequence_model.init_params(util::derive_seed(config.seed, {"subsequence-init"})),
                               train_src, val_src, sub_cfg);
  say(fmt::format("subsequence network: {} params, best epoch {} of {}, val loss {:.4f}",
                  bundle.subsequence_model.parameter_count(), sub.history.best_epoch, sub.history.stopped_epoch,
                  sub.history.best_val_loss));
  bundle.subsequence_params = std::move(sub.params);
  bundle.subsequence_optimizer = std::move(sub.optimizer);

  // Stage 2: aggregation network on per-elimination score vectors.
  const auto train_scores =
      reshape_scores(nn::predict_all(bundle.subsequence_model, bundle.subsequence_params, train_src), count);
  const auto val_scores =
      reshape_scores(nn::predict_all(bundle.subsequence_model, bundle.subsequence_params, val_src), count);
  const auto as_tensors = [&](const std::vector<std::vector<double>>& scores) {
    std::vector<nn::Tensor> out;
    out.reserve(scores.size());
    for (const auto& s : scores) out.emplace_back(nn::Shape{count}, s);
    return out;
  };
  const nn::TensorSource agg_train(as_tensors(train_scores), train_set.labels);
  const nn::TensorSource agg_val(as_tensors(val_scores), val_set.labels);
  bundle.aggregator_model = make_aggregator_model(config.aggregator_architecture, count);
  auto agg_cfg = config.aggregator_training;
  agg_cfg.seed = util::derive_seed(config.seed, {"aggregator-training"});
  auto agg = nn::train_network(bundle.aggregator_model,
                               bundle.aggregator_model.init_params(util::derive_seed(config.seed, {"aggregator-init"})),
                               agg_train, agg_val, agg_cfg);
  say(fmt::format("aggregation network: best epoch {} of {}, val loss {:.4f}", agg.history.best_epoch,
                  agg.history.stopped_epoch, agg.history.best_val_loss));
  bundle.aggregator_params = std::move(agg.params);
  bundle.aggregator_optimizer = std::move(agg.optimizer);

  // Stage 3: dynamic threshold and forest on validation players.
  const auto val_elim = nn::predict_all(bundle.aggregator_model, bundle.aggregator_params, agg_val);
  bundle.threshold = learn_threshold(val_elim, val_set.labels);
  say(fmt::format("threshold {:.4f} (elimination F1 {:.4f})", bundle.threshold.threshold, bundle.threshold.f1));

  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  std::vector<std::vector<double>> grouped;
  std::vector<int> player_labels;
  for (std::size_t i = 0; i < val_set.series.size(); ++i) {
    const auto key = std::make_pair(val_set.series[i].match_id, val_set.series[i].player_id);
    auto [it, fresh] = slot.emplace(key, grouped.size());
    if (fresh) {
      grouped.emplace_back();
      player_labels.push_back(val_set.labels[i]);
    }
    grouped[it->second].push_back(val_elim[i]);
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(grouped.size());
  for (const auto& g : grouped) rows.push_back(match_features(g, config.mode, bundle.threshold.threshold));
  bundle.forest = fit_forest(rows, player_labels, config.forest, util::derive_seed(config.seed, {"forest"}));
  bundle.match_background.assign(rows[0].size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t f = 0; f < r.size(); ++f) bundle.match_background[f] += r[f];
  }
  for (double& v : bundle.match_background) v /= static_cast<double>(rows.size());
  say(fmt::format("forest: {} trees on {} validation players", bundle.forest.trees.size(), rows.size()));

  // Explainer background: seeded training subsequences.
  util::Rng bg_rng = util::make_rng(config.seed, {"background"});
  std::vector<std::size_t> idx(train_src.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t k = std::min(config.background_size, idx.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(bg_rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i : idx) {
    nn::Tensor x(bundle.subsequence_model.input_shape());
    train_src.fill(i, x);
    bundle.background.push_back(std::move(x));
  }

  bundle.history = {{"subsequence", sub.history.to_json()},
                    {"aggregator", agg.history.to_json()},
                    {"subsequence_class_weights", {sub.weights.negative, sub.weights.positive}},
                    {"cleansing", {{"train", cleansing_json(train_set.cleansing)}, {"val", cleansing_json(val_set.cleansing)}}},
                    {"train_eliminations", train_set.series.size()},
                    {"val_eliminations", val_set.series.size()},
                    {"forest_players", rows.size()}};
  return bundle;
}

}  // namespace aimguard::inspector
