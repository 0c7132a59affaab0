#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/nn/layers.hpp"
#include "aimguard/nn/tensor.hpp"

namespace aimguard::nn {

struct Tape {
  std::vector<LayerCache> caches;
};

// Sequential stack built from a JSON architecture:
//   {"layers": [{"type": "gru", "units": 32}, {"type": "conv1d", ...}, ...]}
// Layer i owns parameters named "<ii>_<type>.<param>".
class Model {
 public:
  Model() = default;
  Model(nlohmann::json architecture, Shape input_shape);

  const nlohmann::json& architecture() const { return architecture_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const;
  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  // Glorot-uniform weights, zero biases.
  ParamSet init_params(std::uint64_t seed) const;
  std::size_t parameter_count() const;

  Tensor forward(const ParamSet& params, const Tensor& x, Tape* tape = nullptr,
                 const ForwardContext& ctx = {}) const;
  // dL/dx for the recorded pass; parameter gradients accumulate into `grads`.
  Tensor backward(const ParamSet& params, const Tape& tape, const Tensor& dy, ParamSet* grads) const;

  // First output unit in inference mode.
  double predict(const ParamSet& params, const Tensor& x) const;
  // Gradient of the first output unit with respect to the input.
  double predict_with_input_gradient(const ParamSet& params, const Tensor& x, Tensor& dx) const;

  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);

 private:
  nlohmann::json architecture_;
  Shape input_shape_;
  std::vector<std::shared_ptr<const Layer>> layers_;
};

// ---------------------------------------------------------------------------
// Loss

inline constexpr double kProbabilityClamp = 1e-12;

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;

  double of(int label) const { return label ? positive : negative; }
};

// w_y = N / (2 N_y). Throws SingleClass when a class is absent.
ClassWeights balanced_class_weights(std::span<const int> labels);

// -mean(w_y [y log p + (1 - y) log(1 - p)]), p clamped to [1e-12, 1 - 1e-12].
// Optionally writes dL/dp per prediction.
double weighted_bce(std::span<const double> pred, std::span<const int> target, const ClassWeights& weights,
                    std::vector<double>* grad = nullptr);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet& like, AdamConfig config);

  void step(ParamSet& params, const ParamSet& grads);

  double learning_rate() const { return config_.lr; }
  void set_learning_rate(double lr) { config_.lr = lr; }
  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

  nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json& j);

  bool operator==(const Adam&) const = default;

 private:
  AdamConfig config_;
  ParamSet m_;
  ParamSet v_;
  std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient checking

// Loss as a function of parameters; fills `grad` (same layout) when non-null.
using Objective = std::function<double(const ParamSet& params, ParamSet* grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::map<std::string, double> per_layer;  // keyed by layer name
  std::size_t checked = 0;
};

// Central differences on every scalar parameter. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradCheckReport finite_diff_check(const Objective& objective, const ParamSet& params, double eps = 1e-5);

Objective bce_objective(const Model& model, std::vector<Tensor> inputs, std::vector<int> targets,
                        ClassWeights weights);
// Sum of the first output unit over the inputs (linear in the last layer).
Objective output_sum_objective(const Model& model, std::vector<Tensor> inputs);

}  // namespace aimguard::nn
