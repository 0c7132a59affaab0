#include "aimguard/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "aimguard/error.hpp"

namespace aimguard::nn {
namespace {

// y += M v, M is (rows, cols) row-major.
inline void gemv_acc(const double* m, const double* v, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* mi = m + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += mi[j] * v[j];
    y[i] += acc;
  }
}

// y += M^T v, M is (rows, cols).
inline void gemv_t_acc(const double* m, const double* v, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double vi = v[i];
    if (vi == 0.0) continue;
    const double* mi = m + i * cols;
    for (std::size_t j = 0; j < cols; ++j) y[j] += mi[j] * vi;
  }
}

// M += a b^T, M is (rows, cols).
inline void outer_acc(double* m, const double* a, const double* b, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    double* mi = m + i * cols;
    for (std::size_t j = 0; j < cols; ++j) mi[j] += ai * b[j];
  }
}

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, util::Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.values()) v = dist(rng);
}

void require_cache(const LayerCache& cache, std::size_t n, const std::string& layer) {
  if (cache.tensors.size() < n) {
    throw Error(ErrorKind::kNoForwardPass, fmt::format("layer '{}' has no recorded forward pass", layer));
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

nlohmann::json Layer::config() const { return {{"type", type()}}; }

void Layer::init_params(ParamSet&, util::Rng&) const {}

// ---------------------------------------------------------------------------
// GRU

GruLayer::GruLayer(std::string name, Shape input_shape, std::size_t units)
    : Layer(std::move(name), std::move(input_shape)), units_(units) {
  if (input_shape_.size() != 2) {
    throw Error(ErrorKind::kShapeMismatch, fmt::format("gru expects (T, F) input, got {}", shape_string(input_shape_)));
  }
  if (units_ == 0) throw Error(ErrorKind::kInvalidConfig, "gru units must be positive");
  output_shape_ = {input_shape_[0], units_};
}

nlohmann::json GruLayer::config() const { return {{"type", type()}, {"units", units_}}; }

void GruLayer::init_params(ParamSet& params, util::Rng& rng) const {
  const std::size_t f = input_shape_[1];
  const std::size_t h = units_;
  for (const char* gate : {"z", "r", "h"}) {
    Tensor w({h, f});
    glorot_uniform(w, f, h, rng);
    params.add(param(fmt::format("W_{}", gate).c_str()), std::move(w));
    Tensor u({h, h});
    glorot_uniform(u, h, h, rng);
    params.add(param(fmt::format("U_{}", gate).c_str()), std::move(u));
    params.add(param(fmt::format("b_{}", gate).c_str()), Tensor({h}));
  }
}

Tensor GruLayer::forward(const ParamSet& params, const Tensor& x, LayerCache* cache, const ForwardContext&) const {
  x.require_shape(input_shape_, "gru input");
  const std::size_t steps = input_shape_[0];
  const std::size_t f = input_shape_[1];
  const std::size_t h = units_;
  const double* wz = params.get(param("W_z")).data().data();
  const double* wr = params.get(param("W_r")).data().data();
  const double* wh = params.get(param("W_h")).data().data();
  const double* uz = params.get(param("U_z")).data().data();
  const double* ur = params.get(param("U_r")).data().data();
  const double* uh = params.get(param("U_h")).data().data();
  const auto bz = params.get(param("b_z")).data();
  const auto br = params.get(param("b_r")).data();
  const auto bh = params.get(param("b_h")).data();

  Tensor out({steps, h});
  Tensor hprev({steps, h});
  Tensor zs({steps, h});
  Tensor rs({steps, h});
  Tensor cs({steps, h});
  Tensor rhs({steps, h});
  std::vector<double> state(h, 0.0);
  std::vector<double> az(h), ar(h), ac(h), rh(h);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* xt = x.row(t).data();
    std::copy(bz.begin(), bz.end(), az.begin());
    std::copy(br.begin(), br.end(), ar.begin());
    std::copy(bh.begin(), bh.end(), ac.begin());
    gemv_acc(wz, xt, az.data(), h, f);
    gemv_acc(wr, xt, ar.data(), h, f);
    gemv_acc(wh, xt, ac.data(), h, f);
    gemv_acc(uz, state.data(), az.data(), h, h);
    gemv_acc(ur, state.data(), ar.data(), h, h);
    for (std::size_t i = 0; i < h; ++i) {
      az[i] = sigmoid(az[i]);
      ar[i] = sigmoid(ar[i]);
      rh[i] = ar[i] * state[i];
    }
    gemv_acc(uh, rh.data(), ac.data(), h, h);
    for (std::size_t i = 0; i < h; ++i) {
      const double c = std::tanh(ac[i]);
      hprev.at(t, i) = state[i];
      zs.at(t, i) = az[i];
      rs.at(t, i) = ar[i];
      cs.at(t, i) = c;
      rhs.at(t, i) = rh[i];
      state[i] = (1.0 - az[i]) * state[i] + az[i] * c;
      out.at(t, i) = state[i];
    }
  }
  if (cache) {
    cache->tensors = {x, std::move(hprev), std::move(zs), std::move(rs), std::move(cs), std::move(rhs)};
  }
  return out;
}

Tensor GruLayer::backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                          ParamSet* grads) const {
  require_cache(cache, 6, name_);
  dy.require_shape(output_shape_, "gru output gradient");
  const std::size_t steps = input_shape_[0];
  const std::size_t f = input_shape_[1];
  const std::size_t h = units_;
  const Tensor& x = cache.tensors[0];
  const Tensor& hprev = cache.tensors[1];
  const Tensor& zs = cache.tensors[2];
  const Tensor& rs = cache.tensors[3];
  const Tensor& cs = cache.tensors[4];
  const Tensor& rhs = cache.tensors[5];
  const double* wz = params.get(param("W_z")).data().data();
  const double* wr = params.get(param("W_r")).data().data();
  const double* wh = params.get(param("W_h")).data().data();
  const double* uz = params.get(param("U_z")).data().data();
  const double* ur = params.get(param("U_r")).data().data();
  const double* uh = params.get(param("U_h")).data().data();

  double* gwz = nullptr;
  double* gwr = nullptr;
  double* gwh = nullptr;
  double* guz = nullptr;
  double* gur = nullptr;
  double* guh = nullptr;
  double* gbz = nullptr;
  double* gbr = nullptr;
  double* gbh = nullptr;
  if (grads) {
    gwz = grads->get(param("W_z")).data().data();
    gwr = grads->get(param("W_r")).data().data();
    gwh = grads->get(param("W_h")).data().data();
    guz = grads->get(param("U_z")).data().data();
    gur = grads->get(param("U_r")).data().data();
    guh = grads->get(param("U_h")).data().data();
    gbz = grads->get(param("b_z")).data().data();
    gbr = grads->get(param("b_r")).data().data();
    gbh = grads->get(param("b_h")).data().data();
  }

  Tensor dx({steps, f});
  std::vector<double> dh_next(h, 0.0);
  std::vector<double> dh(h), dz(h), dc(h), dhp(h), drh(h), daz(h), dar(h), dac(h);
  for (std::size_t tt = steps; tt-- > 0;) {
    const double* xt = x.row(tt).data();
    const double* hp = hprev.row(tt).data();
    const double* rh = rhs.row(tt).data();
    for (std::size_t i = 0; i < h; ++i) {
      dh[i] = dy.at(tt, i) + dh_next[i];
      const double z = zs.at(tt, i);
      const double c = cs.at(tt, i);
      dz[i] = dh[i] * (c - hp[i]);
      dc[i] = dh[i] * z;
      dhp[i] = dh[i] * (1.0 - z);
      dac[i] = dc[i] * (1.0 - c * c);
      daz[i] = dz[i] * z * (1.0 - z);
    }
    std::fill(drh.begin(), drh.end(), 0.0);
    gemv_t_acc(uh, dac.data(), drh.data(), h, h);
    for (std::size_t i = 0; i < h; ++i) {
      const double r = rs.at(tt, i);
      dhp[i] += drh[i] * r;
      dar[i] = drh[i] * hp[i] * r * (1.0 - r);
    }
    gemv_t_acc(uz, daz.data(), dhp.data(), h, h);
    gemv_t_acc(ur, dar.data(), dhp.data(), h, h);
    double* dxt = dx.row(tt).data();
    gemv_t_acc(wz, daz.data(), dxt, h, f);
    gemv_t_acc(wr, dar.data(), dxt, h, f);
    gemv_t_acc(wh, dac.data(), dxt, h, f);
    if (grads) {
      outer_acc(gwz, daz.data(), xt, h, f);
      outer_acc(gwr, dar.data(), xt, h, f);
      outer_acc(gwh, dac.data(), xt, h, f);
      outer_acc(guz, daz.data(), hp, h, h);
      outer_acc(gur, dar.data(), hp, h, h);
      outer_acc(guh, dac.data(), rh, h, h);
      for (std::size_t i = 0; i < h; ++i) {
        gbz[i] += daz[i];
        gbr[i] += dar[i];
        gbh[i] += dac[i];
      }
    }
    dh_next = dhp;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Conv1d

Conv1dLayer::Conv1dLayer(std::string name, Shape input_shape, std::size_t filters, std::size_t kernel)
    : Layer(std::move(name), std::move(input_shape)), filters_(filters), kernel_(kernel) {
  if (input_shape_.size() != 2) {
    throw Error(ErrorKind::kShapeMismatch,
                fmt::format("conv1d expects (T, C) input, got {}", shape_string(input_shape_)));
  }
  if (filters_ == 0 || kernel_ == 0) throw Error(ErrorKind::kInvalidConfig, "conv1d needs filters, kernel > 0");
  if (kernel_ > input_shape_[0]) {
    throw Error(ErrorKind::kKernelLargerThanInput,
                fmt::format("kernel {} exceeds sequence length {}", kernel_, input_shape_[0]));
  }
  output_shape_ = {input_shape_[0] - kernel_ + 1, filters_};
}

nlohmann::json Conv1dLayer::config() const {
  return {{"type", type()}, {"filters", filters_}, {"kernel", kernel_}};
}

void Conv1dLayer::init_params(ParamSet& params, util::Rng& rng) const {
  const std::size_t c = input_shape_[1];
  Tensor w({filters_, kernel_, c});
  glorot_uniform(w, kernel_ * c, kernel_ * filters_, rng);
  params.add(param("kernel"), std::move(w));
  params.add(param("bias"), Tensor({filters_}));
}

Tensor Conv1dLayer::forward(const ParamSet& params, const Tensor& x, LayerCache* cache,
                            const ForwardContext&) const {
  if (x.rank() == 2 && x.dim(0) < kernel_) {
    throw Error(ErrorKind::kKernelLargerThanInput,
                fmt::format("kernel {} exceeds sequence length {}", kernel_, x.dim(0)));
  }
  x.require_shape(input_shape_, "conv1d input");
  const std::size_t c = input_shape_[1];
  const std::size_t out_t = output_shape_[0];
  const Tensor& w = params.get(param("kernel"));
  const auto b = params.get(param("bias")).data();
  Tensor y(output_shape_);
  const std::size_t span = kernel_ * c;
  for (std::size_t t = 0; t < out_t; ++t) {
    const double* xt = x.row(t).data();  // kernel window is contiguous: rows t..t+k-1
    for (std::size_t k = 0; k < filters_; ++k) {
      const double* wk = w.data().data() + k * span;
      double acc = b[k];
      for (std::size_t j = 0; j < span; ++j) acc += wk[j] * xt[j];
      y.at(t, k) = acc;
    }
  }
  if (cache) cache->tensors = {x};
  return y;
}

Tensor Conv1dLayer::backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                             ParamSet* grads) const {
  require_cache(cache, 1, name_);
  dy.require_shape(output_shape_, "conv1d output gradient");
  const Tensor& x = cache.tensors[0];
  const std::size_t c = input_shape_[1];
  const std::size_t out_t = output_shape_[0];
  const std::size_t span = kernel_ * c;
  const Tensor& w = params.get(param("kernel"));
  Tensor dx(input_shape_);
  double* gw = grads ? grads->get(param("kernel")).data().data() : nullptr;
  double* gb = grads ? grads->get(param("bias")).data().data() : nullptr;
  for (std::size_t t = 0; t < out_t; ++t) {
    const double* xt = x.row(t).data();
    double* dxt = dx.row(t).data();
    for (std::size_t k = 0; k < filters_; ++k) {
      const double g = dy.at(t, k);
      if (g == 0.0) continue;
      const double* wk = w.data().data() + k * span;
      for (std::size_t j = 0; j < span; ++j) dxt[j] += g * wk[j];
      if (gw) {
        double* gwk = gw + k * span;
        for (std::size_t j = 0; j < span; ++j) gwk[j] += g * xt[j];
        gb[k] += g;
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Global max pool

GlobalMaxPoolLayer::GlobalMaxPoolLayer(std::string name, Shape input_shape)
    : Layer(std::move(name), std::move(input_shape)) {
  if (input_shape_.size() != 2 || input_shape_[0] == 0) {
    throw Error(ErrorKind::kShapeMismatch, "global_max_pool expects a non-empty (T, C) input");
  }
  output_shape_ = {input_shape_[1]};
}

Tensor GlobalMaxPoolLayer::forward(const ParamSet&, const Tensor& x, LayerCache* cache,
                                   const ForwardContext&) const {
  x.require_shape(input_shape_, "global_max_pool input");
  const std::size_t steps = input_shape_[0];
  const std::size_t ch = input_shape_[1];
  Tensor y(output_shape_);
  std::vector<std::size_t> arg(ch, 0);
  for (std::size_t k = 0; k < ch; ++k) {
    double best = x.at(0, k);
    for (std::size_t t = 1; t < steps; ++t) {
      if (x.at(t, k) > best) {
        best = x.at(t, k);
        arg[k] = t;
      }
    }
    y[k] = best;
  }
  if (cache) {
    cache->tensors = {Tensor({0})};
    cache->indices = std::move(arg);
  }
  return y;
}

Tensor GlobalMaxPoolLayer::backward(const ParamSet&, const LayerCache& cache, const Tensor& dy, ParamSet*) const {
  require_cache(cache, 1, name_);
  dy.require_shape(output_shape_, "global_max_pool output gradient");
  Tensor dx(input_shape_);
  for (std::size_t k = 0; k < input_shape_[1]; ++k) dx.at(cache.indices[k], k) = dy[k];
  return dx;
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(std::string name, Shape input_shape, std::size_t units)
    : Layer(std::move(name), std::move(input_shape)), in_(shape_size(input_shape_)), units_(units) {
  if (units_ == 0 || in_ == 0) throw Error(ErrorKind::kInvalidConfig, "dense needs non-empty input and units");
  output_shape_ = {units_};
}

nlohmann::json DenseLayer::config() const { return {{"type", type()}, {"units", units_}}; }

void DenseLayer::init_params(ParamSet& params, util::Rng& rng) const {
  Tensor w({units_, in_});
  glorot_uniform(w, in_, units_, rng);
  params.add(param("W"), std::move(w));
  params.add(param("b"), Tensor({units_}));
}

Tensor DenseLayer::forward(const ParamSet& params, const Tensor& x, LayerCache* cache, const ForwardContext&) const {
  x.require_shape(input_shape_, "dense input");
  const auto b = params.get(param("b")).data();
  Tensor y(output_shape_, std::vector<double>(b.begin(), b.end()));
  gemv_acc(params.get(param("W")).data().data(), x.data().data(), y.data().data(), units_, in_);
  if (cache) cache->tensors = {x};
  return y;
}

Tensor DenseLayer::backward(const ParamSet& params, const LayerCache& cache, const Tensor& dy,
                            ParamSet* grads) const {
  require_cache(cache, 1, name_);
  dy.require_shape(output_shape_, "dense output gradient");
  const Tensor& x = cache.tensors[0];
  Tensor dx(input_shape_);
  gemv_t_acc(params.get(param("W")).data().data(), dy.data().data(), dx.data().data(), units_, in_);
  if (grads) {
    outer_acc(grads->get(param("W")).data().data(), dy.data().data(), x.data().data(), units_, in_);
    auto gb = grads->get(param("b")).data();
    for (std::size_t i = 0; i < units_; ++i) gb[i] += dy[i];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Activations

ActivationLayer::ActivationLayer(std::string name, Shape input_shape, Activation fn)
    : Layer(std::move(name), std::move(input_shape)), fn_(fn) {
  output_shape_ = input_shape_;
}

std::string ActivationLayer::type() const {
  switch (fn_) {
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
  }
  return "activation";
}

Tensor ActivationLayer::forward(const ParamSet&, const Tensor& x, LayerCache* cache, const ForwardContext&) const {
  x.require_shape(input_shape_, "activation input");
  Tensor y = x;
  for (auto& v : y.values()) {
    switch (fn_) {
      case Activation::kSigmoid: v = sigmoid(v); break;
      case Activation::kTanh: v = std::tanh(v); break;
      case Activation::kRelu: v = v > 0.0 ? v : 0.0; break;
    }
  }
  if (cache) cache->tensors = {y};
  return y;
}

Tensor ActivationLayer::backward(const ParamSet&, const LayerCache& cache, const Tensor& dy, ParamSet*) const {
  require_cache(cache, 1, name_);
  dy.require_shape(output_shape_, "activation output gradient");
  const Tensor& y = cache.tensors[0];
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    switch (fn_) {
      case Activation::kSigmoid: dx[i] *= y[i] * (1.0 - y[i]); break;
      case Activation::kTanh: dx[i] *= 1.0 - y[i] * y[i]; break;
      case Activation::kRelu: dx[i] = y[i] > 0.0 ? dx[i] : 0.0; break;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout

DropoutLayer::DropoutLayer(std::string name, Shape input_shape, double rate)
    : Layer(std::move(name), std::move(input_shape)), rate_(rate) {
  if (!(rate_ >= 0.0 && rate_ < 1.0)) throw Error(ErrorKind::kInvalidConfig, "dropout rate must be in [0, 1)");
  output_shape_ = input_shape_;
}

nlohmann::json DropoutLayer::config() const { return {{"type", type()}, {"rate", rate_}}; }

Tensor DropoutLayer::forward(const ParamSet&, const Tensor& x, LayerCache* cache, const ForwardContext& ctx) const {
  x.require_shape(input_shape_, "dropout input");
  Tensor mask(input_shape_, 1.0);
  if (ctx.training && rate_ > 0.0) {
    if (!ctx.rng) throw Error(ErrorKind::kInvalidConfig, "training-mode dropout needs an rng");
    std::bernoulli_distribution keep(1.0 - rate_);
    const double scale = 1.0 / (1.0 - rate_);
    for (auto& m : mask.values()) m = keep(*ctx.rng) ? scale : 0.0;
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  if (cache) cache->tensors = {std::move(mask)};
  return y;
}

Tensor DropoutLayer::backward(const ParamSet&, const LayerCache& cache, const Tensor& dy, ParamSet*) const {
  require_cache(cache, 1, name_);
  dy.require_shape(output_shape_, "dropout output gradient");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= cache.tensors[0][i];
  return dx;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Layer> make_layer(const nlohmann::json& spec, std::string name, const Shape& input_shape) {
  const auto type = spec.at("type").get<std::string>();
  if (type == "gru") return std::make_unique<GruLayer>(std::move(name), input_shape, spec.at("units").get<std::size_t>());
  if (type == "conv1d") {
    return std::make_unique<Conv1dLayer>(std::move(name), input_shape, spec.at("filters").get<std::size_t>(),
                                         spec.at("kernel").get<std::size_t>());
  }
  if (type == "global_max_pool") return std::make_unique<GlobalMaxPoolLayer>(std::move(name), input_shape);
  if (type == "dense") {
    return std::make_unique<DenseLayer>(std::move(name), input_shape, spec.at("units").get<std::size_t>());
  }
  if (type == "sigmoid") return std::make_unique<ActivationLayer>(std::move(name), input_shape, Activation::kSigmoid);
  if (type == "tanh") return std::make_unique<ActivationLayer>(std::move(name), input_shape, Activation::kTanh);
  if (type == "relu") return std::make_unique<ActivationLayer>(std::move(name), input_shape, Activation::kRelu);
  if (type == "dropout") {
    return std::make_unique<DropoutLayer>(std::move(name), input_shape, spec.at("rate").get<double>());
  }
  throw Error(ErrorKind::kInvalidConfig, fmt::format("unknown layer type '{}'", type));
}

}  // namespace aimguard::nn
