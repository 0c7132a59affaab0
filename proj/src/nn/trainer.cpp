#include "aimguard/nn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "aimguard/error.hpp"

namespace aimguard::nn {

namespace {

constexpr std::size_t kChunk = 32;

bool has_dropout(const Model& model) {
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (model.layer(i).type() == "dropout") return true;
  }
  return false;
}

struct ChunkResult {
  ParamSet grads;
  double loss = 0.0;
};

// Gradient of the summed weighted loss over one chunk; the caller divides by
// the batch size.
ChunkResult run_chunk(const Model& model, const ParamSet& params, const SampleSource& source,
                      std::span<const std::size_t> idx, const ClassWeights& weights, std::uint64_t rng_seed,
                      bool dropout) {
  ChunkResult out{params.zeros_like(), 0.0};
  util::Rng rng(rng_seed);
  ForwardContext ctx{true, dropout ? &rng : nullptr};
  Tensor x(model.input_shape());
  Tape tape;
  for (std::size_t i : idx) {
    source.fill(i, x);
    const Tensor y = model.forward(params, x, &tape, ctx);
    const double p = std::clamp(y[0], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const int label = source.label(i);
    const double w = weights.of(label);
    const double t = label ? 1.0 : 0.0;
    out.loss -= w * (t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    Tensor dy(y.shape());
    dy[0] = -w * (t / p - (1.0 - t) / (1.0 - p));
    model.backward(params, tape, dy, &out.grads);
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, util::Rng& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (k == 0 || k >= n) {
    std::shuffle(all.begin(), all.end(), rng);
    return all;
  }
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  return all;
}

}  // namespace

TensorSource::TensorSource(std::vector<Tensor> inputs, std::vector<int> labels)
    : inputs_(std::move(inputs)), labels_(std::move(labels)) {
  if (inputs_.size() != labels_.size()) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} inputs vs {} labels", inputs_.size(), labels_.size()));
  }
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"lr_factor", lr_factor},
          {"lr_patience", lr_patience},
          {"min_lr", min_lr},
          {"early_stop_patience", early_stop_patience},
          {"min_delta", min_delta},
          {"class_weighting", class_weighting},
          {"seed", seed},
          {"samples_per_epoch", samples_per_epoch},
          {"val_samples", val_samples}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j, TrainingConfig c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_factor = j.value("lr_factor", c.lr_factor);
  c.lr_patience = j.value("lr_patience", c.lr_patience);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.min_delta = j.value("min_delta", c.min_delta);
  c.class_weighting = j.value("class_weighting", c.class_weighting);
  c.seed = j.value("seed", c.seed);
  c.samples_per_epoch = j.value("samples_per_epoch", c.samples_per_epoch);
  c.val_samples = j.value("val_samples", c.val_samples);
  if (c.epochs < 1 || c.batch_size == 0 || !(c.lr >= 0.0) || !(c.lr_factor > 0.0 && c.lr_factor <= 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "training config out of range");
  }
  return c;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainingConfig{}); }

nlohmann::json TrainingHistory::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_loss", e.val_loss},
                    {"lr", e.lr},
                    {"checkpointed", e.checkpointed}});
  }
  nlohmann::json changes = nlohmann::json::array();
  for (const auto& [epoch, lr] : lr_changes) changes.push_back({{"epoch", epoch}, {"lr", lr}});
  return {{"epochs", rows},
          {"best_epoch", best_epoch},
          {"best_val_loss", best_val_loss},
          {"stopped_epoch", stopped_epoch},
          {"early_stopped", early_stopped},
          {"lr_changes", changes}};
}

PlateauSchedule::PlateauSchedule(const TrainingConfig& config) : config_(config) {}

PlateauSchedule::Decision PlateauSchedule::on_epoch_end(double val_loss, double current_lr) {
  Decision d;
  d.new_lr = current_lr;
  if (first_) {
    first_ = false;
    best_checkpoint_ = best_stop_ = best_lr_ = val_loss;
    d.checkpoint = true;
    return d;
  }
  if (val_loss < best_checkpoint_) {
    best_checkpoint_ = val_loss;
    d.checkpoint = true;
  }

  if (val_loss < best_lr_ - config_.min_delta) {
    best_lr_ = val_loss;
    wait_lr_ = 0;
  } else if (++wait_lr_ >= config_.lr_patience) {
    wait_lr_ = 0;
    if (current_lr > config_.min_lr) {
      d.new_lr = std::max(current_lr * config_.lr_factor, config_.min_lr);
      d.reduce_lr = true;
    }
  }

  if (val_loss < best_stop_ - config_.min_delta) {
    best_stop_ = val_loss;
    wait_stop_ = 0;
  } else if (++wait_stop_ >= config_.early_stop_patience) {
    d.stop = true;
  }
  return d;
}

double evaluate_loss(const Model& model, const ParamSet& params, const SampleSource& source,
                     std::span<const std::size_t> indices, const ClassWeights& weights) {
  if (indices.empty()) throw Error(ErrorKind::kEmptySlice, "no samples to evaluate");
  const std::size_t chunks = (indices.size() + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
  util::parallel_for(chunks, [&](std::size_t c) {
    Tensor x(model.input_shape());
    const std::size_t end = std::min(indices.size(), (c + 1) * kChunk);
    for (std::size_t k = c * kChunk; k < end; ++k) {
      source.fill(indices[k], x);
      const double p = std::clamp(model.predict(params, x), kProbabilityClamp, 1.0 - kProbabilityClamp);
      const int label = source.label(indices[k]);
      partial[c] -= weights.of(label) * (label ? std::log(p) : std::log(1.0 - p));
    }
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total / static_cast<double>(indices.size());
}

std::vector<double> predict_all(const Model& model, const ParamSet& params, const SampleSource& source) {
  std::vector<double> out(source.size());
  const std::size_t chunks = (source.size() + kChunk - 1) / kChunk;
  util::parallel_for(chunks, [&](std::size_t c) {
    Tensor x(model.input_shape());
    const std::size_t end = std::min(source.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      source.fill(i, x);
      out[i] = model.predict(params, x);
    }
  });
  return out;
}

TrainResult train_network(const Model& model, ParamSet init, const SampleSource& train, const SampleSource& val,
                          const TrainingConfig& config) {
  if (train.size() == 0 || val.size() == 0) throw Error(ErrorKind::kEmptySlice, "empty training or validation set");
  std::vector<int> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) labels[i] = train.label(i);
  const ClassWeights weights = config.class_weighting ? balanced_class_weights(labels) : ClassWeights{};

  util::Rng order_rng = util::make_rng(config.seed, {"epoch-order"});
  util::Rng val_rng = util::make_rng(config.seed, {"val-subset"});
  std::vector<std::size_t> val_idx = sample_indices(val.size(), config.val_samples, val_rng);
  std::sort(val_idx.begin(), val_idx.end());

  const bool dropout = has_dropout(model);
  TrainResult result;
  result.weights = weights;
  result.params = init;
  ParamSet params = std::move(init);
  Adam adam(params, AdamConfig{config.lr});
  PlateauSchedule schedule(config);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = sample_indices(train.size(), config.samples_per_epoch, order_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch_idx(order.data() + start, end - start);
      const std::size_t chunks = (batch_idx.size() + kChunk - 1) / kChunk;
      std::vector<ChunkResult> parts(chunks);
      util::parallel_for(chunks, [&](std::size_t c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(batch_idx.size(), lo + kChunk);
        const auto seed = util::derive_seed(config.seed, {"dropout", std::to_string(epoch), std::to_string(batch),
                                                          std::to_string(c)});
        parts[c] = run_chunk(model, params, train, batch_idx.subspan(lo, hi - lo), weights, seed, dropout);
      });
      ParamSet grads = std::move(parts[0].grads);
      double loss = parts[0].loss;
      for (std::size_t c = 1; c < chunks; ++c) {
        grads.add_scaled(parts[c].grads, 1.0);
        loss += parts[c].loss;
      }
      const double inv = 1.0 / static_cast<double>(batch_idx.size());
      for (auto& [name, g] : grads) {
        for (double& v : g.data()) v *= inv;
      }
      adam.step(params, grads);
      epoch_loss += loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.val_loss = evaluate_loss(model, params, val, val_idx, weights);
    rec.lr = adam.learning_rate();
    const auto decision = schedule.on_epoch_end(rec.val_loss, adam.learning_rate());
    rec.checkpointed = decision.checkpoint;
    if (decision.checkpoint) {
      result.params = params;
      result.history.best_epoch = epoch;
      result.history.best_val_loss = rec.val_loss;
    }
    result.history.epochs.push_back(rec);
    result.history.stopped_epoch = epoch;
    if (decision.reduce_lr) {
      adam.set_learning_rate(decision.new_lr);
      result.history.lr_changes.emplace_back(epoch, decision.new_lr);
    }
    if (decision.stop) {
      result.history.early_stopped = true;
      break;
    }
  }
  result.optimizer = std::move(adam);
  return result;
}

}  // namespace aimguard::nn
