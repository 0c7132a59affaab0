#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/nn/model.hpp"

namespace aimguard::nn {

// Indexed labeled samples; `fill` writes sample i into a tensor already shaped
// like the model input.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual void fill(std::size_t i, Tensor& x) const = 0;
};

class TensorSource final : public SampleSource {
 public:
  TensorSource(std::vector<Tensor> inputs, std::vector<int> labels);
  std::size_t size() const override { return inputs_.size(); }
  int label(std::size_t i) const override { return labels_[i]; }
  void fill(std::size_t i, Tensor& x) const override { x = inputs_[i]; }

 private:
  std::vector<Tensor> inputs_;
  std::vector<int> labels_;
};

struct TrainingConfig {
  int epochs = 500;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double lr_factor = 0.5;
  int lr_patience = 20;
  double min_lr = 1e-4;
  int early_stop_patience = 50;
  double min_delta = 0.0;
  bool class_weighting = true;
  std::uint64_t seed = 0;
  // 0 = every training sample each epoch; otherwise a fresh random subset.
  std::size_t samples_per_epoch = 0;
  // 0 = whole validation source; otherwise a fixed random subset.
  std::size_t val_samples = 0;

  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j, TrainingConfig defaults);
  static TrainingConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  bool checkpointed = false;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  int stopped_epoch = 0;
  bool early_stopped = false;
  std::vector<std::pair<int, double>> lr_changes;  // (epoch, new lr)

  nlohmann::json to_json() const;
};

// ModelCheckpoint + ReduceLROnPlateau + EarlyStopping bookkeeping on the
// validation loss.
class PlateauSchedule {
 public:
  struct Decision {
    bool checkpoint = false;
    bool reduce_lr = false;
    double new_lr = 0.0;
    bool stop = false;
  };

  explicit PlateauSchedule(const TrainingConfig& config);
  Decision on_epoch_end(double val_loss, double current_lr);

 private:
  TrainingConfig config_;
  double best_checkpoint_ = 0.0;
  double best_stop_ = 0.0;
  double best_lr_ = 0.0;
  int wait_stop_ = 0;
  int wait_lr_ = 0;
  bool first_ = true;
};

struct TrainResult {
  ParamSet params;  // lowest validation loss
  Adam optimizer;   // state at the end of training
  TrainingHistory history;
  ClassWeights weights;
};

// Mini-batch Adam on weighted binary cross-entropy. Batches are split into
// fixed-size chunks whose gradients are reduced in chunk order, so the result
// does not depend on AIMGUARD_THREADS.
TrainResult train_network(const Model& model, ParamSet init, const SampleSource& train, const SampleSource& val,
                          const TrainingConfig& config);

double evaluate_loss(const Model& model, const ParamSet& params, const SampleSource& source,
                     std::span<const std::size_t> indices, const ClassWeights& weights);

std::vector<double> predict_all(const Model& model, const ParamSet& params, const SampleSource& source);

}  // namespace aimguard::nn
