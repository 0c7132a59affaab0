#pragma once

// Fixed layer set with hand-written backward passes. Layers are immutable
// descriptions; parameters live in a ParamSet under "<layer-name>.<param>".

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/nn/tensor.hpp"
#include "aimguard/util.hpp"

namespace aimguard::nn {

struct ForwardContext {
  bool training = false;
  util::Rng* rng = nullptr;  // required when training with dropout
};

struct LayerCache {
  std::vector<Tensor> tensors;
  std::vector<std::size_t> indices;
};

class Layer {
 public:
  Layer(std::string name, Shape input_shape) : name_(std::move(name)), input_shape_(std::move(input_shape)) {}
  virtual ~Layer() = default;

  virtual std::string type() const = 0;
  virtual nlohmann::json config() const;
  virtual void init_params(ParamSet& params, util::Rng& rng) const;
  virtual Tensor forward(const ParamSet& params, const Tensor& x, LayerCache* cache,
                         const ForwardContext& ctx) const = 0;
  // Returns dL/dx and accumulates parameter gradients into `grads` (if given).
  virtual Tensor backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                          ParamSet* grads) const = 0;

  const std::string& name() const { return name_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }

 protected:
  std::string param(const char* suffix) const { return name_ + "." + suffix; }

  std::string name_;
  Shape input_shape_;
  Shape output_shape_;
};

// Gated recurrent unit over a (T, F) sequence, h_0 = 0:
//   z = sig(W_z x + U_z h + b_z), r = sig(W_r x + U_r h + b_r)
//   c = tanh(W_h x + U_h (r*h) + b_h),  h' = (1 - z) * h + z * c
// Output is the full (T, H) hidden-state sequence.
class GruLayer final : public Layer {
 public:
  GruLayer(std::string name, Shape input_shape, std::size_t units);
  std::string type() const override { return "gru"; }
  nlohmann::json config() const override;
  void init_params(ParamSet& params, util::Rng& rng) const override;
  Tensor forward(const ParamSet& params, const Tensor& x, LayerCache* cache,
                 const ForwardContext& ctx) const override;
  Tensor backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                  ParamSet* grads) const override;

 private:
  std::size_t units_;
};

// Valid (unpadded) convolution over time: (T, C) -> (T - k + 1, filters).
class Conv1dLayer final : public Layer {
 public:
  Conv1dLayer(std::string name, Shape input_shape, std::size_t filters, std::size_t kernel);
  std::string type() const override { return "conv1d"; }
  nlohmann::json config() const override;
  void init_params(ParamSet& params, util::Rng& rng) const override;
  Tensor forward(const ParamSet& params, const Tensor& x, LayerCache* cache,
                 const ForwardContext& ctx) const override;
  Tensor backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                  ParamSet* grads) const override;

 private:
  std::size_t filters_;
  std::size_t kernel_;
};

// (T, C) -> (C): max over time.
class GlobalMaxPoolLayer final : public Layer {
 public:
  GlobalMaxPoolLayer(std::string name, Shape input_shape);
  std::string type() const override { return "global_max_pool"; }
  Tensor forward(const ParamSet& params, const Tensor& x, LayerCache* cache,
                 const ForwardContext& ctx) const override;
  Tensor backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                  ParamSet* grads) const override;
};

// Affine map on a flattened input: (N...) -> (units).
class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, Shape input_shape, std::size_t units);
  std::string type() const override { return "dense"; }
  nlohmann::json config() const override;
  void init_params(ParamSet& params, util::Rng& rng) const override;
  Tensor forward(const ParamSet& params, const Tensor& x, LayerCache* cache,
                 const ForwardContext& ctx) const override;
  Tensor backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                  ParamSet* grads) const override;

 private:
  std::size_t in_;
  std::size_t units_;
};

enum class Activation { kSigmoid, kTanh, kRelu };

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(std::string name, Shape input_shape, Activation fn);
  std::string type() const override;
  Tensor forward(const ParamSet& params, const Tensor& x, LayerCache* cache,
                 const ForwardContext& ctx) const override;
  Tensor backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                  ParamSet* grads) const override;

 private:
  Activation fn_;
};

// Inverted dropout: identity at inference, scaled Bernoulli mask in training.
class DropoutLayer final : public Layer {
 public:
  DropoutLayer(std::string name, Shape input_shape, double rate);
  std::string type() const override { return "dropout"; }
  nlohmann::json config() const override;
  Tensor forward(const ParamSet& params, const Tensor& x, LayerCache* cache,
                 const ForwardContext& ctx) const override;
  Tensor backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                  ParamSet* grads) const override;

 private:
  double rate_;
};

double sigmoid(double x);

// Builds one layer from its JSON description, e.g. {"type": "gru", "units": 32}.
std::unique_ptr<Layer> make_layer(const nlohmann::json& spec, std::string name, const Shape& input_shape);

}  // namespace aimguard::nn
