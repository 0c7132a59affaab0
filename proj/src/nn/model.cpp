#include "aimguard/nn/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "aimguard/error.hpp"

namespace aimguard::nn {

Model::Model(nlohmann::json architecture, Shape input_shape)
    : architecture_(std::move(architecture)), input_shape_(std::move(input_shape)) {
  const auto& specs = architecture_.at("layers");
  if (!specs.is_array() || specs.empty()) throw Error(ErrorKind::kInvalidConfig, "architecture has no layers");
  Shape shape = input_shape_;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto type = specs[i].at("type").get<std::string>();
    auto layer = make_layer(specs[i], fmt::format("{:02}_{}", i, type), shape);
    shape = layer->output_shape();
    layers_.push_back(std::move(layer));
  }
}

const Shape& Model::output_shape() const {
  if (layers_.empty()) return input_shape_;
  return layers_.back()->output_shape();
}

ParamSet Model::init_params(std::uint64_t seed) const {
  util::Rng rng(seed);
  ParamSet params;
  for (const auto& layer : layers_) layer->init_params(params, rng);
  return params;
}

std::size_t Model::parameter_count() const { return init_params(0).scalar_count(); }

Tensor Model::forward(const ParamSet& params, const Tensor& x, Tape* tape, const ForwardContext& ctx) const {
  if (tape) tape->caches.assign(layers_.size(), LayerCache{});
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(params, h, tape ? &tape->caches[i] : nullptr, ctx);
  }
  return h;
}

Tensor Model::backward(const ParamSet& params, const Tape& tape, const Tensor& dy, ParamSet* grads) const {
  if (tape.caches.size() != layers_.size()) {
    throw Error(ErrorKind::kNoForwardPass, "backward called without a recorded forward pass");
  }
  Tensor g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(params, tape.caches[i], g, grads);
  }
  return g;
}

double Model::predict(const ParamSet& params, const Tensor& x) const { return forward(params, x)[0]; }

double Model::predict_with_input_gradient(const ParamSet& params, const Tensor& x, Tensor& dx) const {
  Tape tape;
  const Tensor y = forward(params, x, &tape);
  Tensor dy(y.shape());
  dy[0] = 1.0;
  dx = backward(params, tape, dy, nullptr);
  return y[0];
}

nlohmann::json Model::to_json() const {
  return {{"architecture", architecture_}, {"input_shape", input_shape_}};
}

Model Model::from_json(const nlohmann::json& j) {
  return Model(j.at("architecture"), j.at("input_shape").get<Shape>());
}

// ---------------------------------------------------------------------------

ClassWeights balanced_class_weights(std::span<const int> labels) {
  std::size_t pos = 0;
  for (int y : labels) pos += y ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorKind::kSingleClass, "class weights need both classes");
  const double n = static_cast<double>(labels.size());
  return ClassWeights{n / (2.0 * static_cast<double>(neg)), n / (2.0 * static_cast<double>(pos))};
}

double weighted_bce(std::span<const double> pred, std::span<const int> target, const ClassWeights& weights,
                    std::vector<double>* grad) {
  if (pred.size() != target.size()) {
    throw Error(ErrorKind::kLengthMismatch, fmt::format("{} predictions vs {} targets", pred.size(), target.size()));
  }
  if (pred.empty()) throw Error(ErrorKind::kLengthMismatch, "empty batch");
  const double n = static_cast<double>(pred.size());
  if (grad) grad->assign(pred.size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(pred[i] >= 0.0 && pred[i] <= 1.0)) {
      throw Error(ErrorKind::kProbabilityOutOfRange, fmt::format("prediction {} = {}", i, pred[i]));
    }
    const double p = std::clamp(pred[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double w = weights.of(target[i]);
    const double y = target[i] ? 1.0 : 0.0;
    loss -= w * (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    if (grad) (*grad)[i] = -w * (y / p - (1.0 - y) / (1.0 - p)) / n;
  }
  return loss / n;
}

// ---------------------------------------------------------------------------

Adam::Adam(const ParamSet& like, AdamConfig config)
    : config_(config), m_(like.zeros_like()), v_(like.zeros_like()) {}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto g = grads.get(name).data();
    auto m = m_.get(name).data();
    auto v = v_.get(name).data();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

nlohmann::json Adam::to_json() const {
  return {{"lr", config_.lr},       {"beta1", config_.beta1}, {"beta2", config_.beta2},
          {"epsilon", config_.epsilon}, {"t", t_},            {"m", m_.to_json()},
          {"v", v_.to_json()}};
}

Adam Adam::from_json(const nlohmann::json& j) {
  Adam a;
  a.config_ = AdamConfig{j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
                         j.at("epsilon").get<double>()};
  a.t_ = j.at("t").get<std::int64_t>();
  a.m_ = ParamSet::from_json(j.at("m"));
  a.v_ = ParamSet::from_json(j.at("v"));
  return a;
}

// ---------------------------------------------------------------------------

GradCheckReport finite_diff_check(const Objective& objective, const ParamSet& params, double eps) {
  GradCheckReport report;
  ParamSet analytic = params.zeros_like();
  objective(params, &analytic);
  ParamSet probe = params;
  for (auto& [name, tensor] : probe) {
    const std::string layer = name.substr(0, name.find('.'));
    auto values = tensor.data();
    const auto a = analytic.get(name).data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = objective(probe, nullptr);
      values[i] = orig - eps;
      const double down = objective(probe, nullptr);
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(a[i]), std::abs(numeric), 1e-6});
      const double rel = std::abs(a[i] - numeric) / denom;
      auto& slot = report.per_layer[layer];
      slot = std::max(slot, rel);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = fmt::format("{}[{}]", name, i);
      }
      ++report.checked;
    }
  }
  return report;
}

Objective bce_objective(const Model& model, std::vector<Tensor> inputs, std::vector<int> targets,
                        ClassWeights weights) {
  return [&model, inputs = std::move(inputs), targets = std::move(targets), weights](
             const ParamSet& params, ParamSet* grad) {
    std::vector<double> preds(inputs.size());
    std::vector<Tape> tapes(grad ? inputs.size() : 0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      preds[i] = model.forward(params, inputs[i], grad ? &tapes[i] : nullptr)[0];
    }
    std::vector<double> dpred;
    const double loss = weighted_bce(preds, targets, weights, grad ? &dpred : nullptr);
    if (grad) {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor dy(model.output_shape());
        dy[0] = dpred[i];
        model.backward(params, tapes[i], dy, grad);
      }
    }
    return loss;
  };
}

Objective output_sum_objective(const Model& model, std::vector<Tensor> inputs) {
  return [&model, inputs = std::move(inputs)](const ParamSet& params, ParamSet* grad) {
    double total = 0.0;
    for (const auto& x : inputs) {
      Tape tape;
      const Tensor y = model.forward(params, x, grad ? &tape : nullptr);
      total += y[0];
      if (grad) {
        Tensor dy(y.shape());
        dy[0] = 1.0;
        model.backward(params, tape, dy, grad);
      }
    }
    return total;
  };
}

}  // namespace aimguard::nn
