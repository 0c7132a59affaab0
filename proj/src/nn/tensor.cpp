#include "aimguard/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "aimguard/error.hpp"
#include "aimguard/util.hpp"

namespace aimguard::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) { return fmt::format("({})", fmt::join(shape, ", ")); }

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw Error(ErrorKind::kShapeMismatch,
                fmt::format("shape {} holds {} values, got {}", shape_string(shape_), shape_size(shape_),
                            data_.size()));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_shape(const Shape& expected, const char* what) const {
  if (shape_ != expected) {
    throw Error(ErrorKind::kShapeMismatch,
                fmt::format("{}: expected {}, got {}", what, shape_string(expected), shape_string(shape_)));
  }
}

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  auto [it, inserted] = tensors_.insert_or_assign(name, std::move(t));
  return it->second;
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorKind::kShapeMismatch, fmt::format("no parameter '{}'", name));
  return it->second;
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorKind::kShapeMismatch, fmt::format("no parameter '{}'", name));
  return it->second;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : tensors_) out.add(name, Tensor(t.shape()));
  return out;
}

void ParamSet::set_zero() {
  for (auto& [_, t] : tensors_) t.fill(0.0);
}

void ParamSet::add_scaled(const ParamSet& other, double scale) {
  for (auto& [name, t] : tensors_) {
    const Tensor& o = other.get(name);
    auto dst = t.data();
    auto src = o.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (const auto& [name, t] : tensors_) {
    auto it = other.tensors_.find(name);
    if (it == other.tensors_.end() || it->second.shape() != t.shape()) return false;
  }
  return true;
}

nlohmann::json ParamSet::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : tensors_) {
    j[name] = {{"shape", t.shape()}, {"data", util::encode_doubles(t.data())}};
  }
  return j;
}

ParamSet ParamSet::from_json(const nlohmann::json& j) {
  ParamSet out;
  for (const auto& [name, entry] : j.items()) {
    auto shape = entry.at("shape").get<Shape>();
    auto data = util::decode_doubles(entry.at("data").get<std::string>());
    out.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace aimguard::nn
