#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace aimguard::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Row `i` of a rank-2 tensor.
  std::span<double> row(std::size_t i) { return std::span<double>(data_).subspan(i * shape_[1], shape_[1]); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * shape_[1], shape_[1]);
  }

  void fill(double v);
  bool all_finite() const;
  void require_shape(const Shape& expected, const char* what) const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Named trainable tensors; std::map keeps iteration order deterministic.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  std::vector<std::string> names() const;
  std::size_t scalar_count() const;
  ParamSet zeros_like() const;
  void set_zero();
  void add_scaled(const ParamSet& other, double scale);  // this += scale * other
  bool same_layout(const ParamSet& other) const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  bool empty() const { return tensors_.empty(); }

  // {name: {shape: [...], data: base64 LE f64}}; bit-exact.
  nlohmann::json to_json() const;
  static ParamSet from_json(const nlohmann::json& j);

  bool operator==(const ParamSet&) const = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

}  // namespace aimguard::nn
