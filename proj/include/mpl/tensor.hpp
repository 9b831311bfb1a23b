#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mpl/common.hpp"

namespace mpl {

// Dense row-major f64 tensor. Rank 1 and 2 are what the model uses; rank-1
// tensors act as row vectors wherever a 2D view is needed.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<i64> shape);

  static Tensor zeros(std::vector<i64> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<i64> shape, double v);
  static Tensor from(std::vector<i64> shape, std::vector<double> data);
  static Tensor scalar(double v) { return from({1}, {v}); }

  const std::vector<i64>& shape() const { return shape_; }
  i64 ndim() const { return i64(shape_.size()); }
  i64 dim(i64 i) const { return shape_[size_t(i)]; }
  i64 numel() const { return i64(data_.size()); }
  bool empty() const { return data_.empty(); }

  // 2D view: rank-1 tensors are 1 x n rows.
  i64 rows() const;
  i64 cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](i64 i) { return data_[size_t(i)]; }
  double operator[](i64 i) const { return data_[size_t(i)]; }
  double& at(i64 i, i64 j) { return data_[size_t(i * cols() + j)]; }
  double at(i64 i, i64 j) const { return data_[size_t(i * cols() + j)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;
  bool all_finite() const;
  void fill(double v);

private:
  std::vector<i64> shape_;
  std::vector<double> data_;
};

// Ordered, named tensor collection: model weights, gradients, Adam moments.
// Iteration order is insertion order, which fixes serialization and
// initialization order.
class ParamSet {
public:
  Tensor& add(const std::string& name, Tensor t);
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  i64 size() const { return i64(items_.size()); }
  i64 total_elements() const;

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const std::pair<std::string, Tensor>& item(i64 i) const {
    return items_[size_t(i)];
  }
  std::pair<std::string, Tensor>& item(i64 i) { return items_[size_t(i)]; }

  // Same names and shapes, all values zero.
  ParamSet zeros_like() const;
  void fill(double v);

private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace mpl
