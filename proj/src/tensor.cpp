#include "mpl/tensor.hpp"

#include <cmath>

namespace mpl {

Tensor::Tensor(std::vector<i64> shape) : shape_(std::move(shape)) {
  i64 n = 1;
  for (i64 d : shape_) {
    if (d < 0) raise(Err::shape_mismatch, "negative dimension");
    n *= d;
  }
  data_.assign(size_t(n), 0.0);
}

Tensor Tensor::full(std::vector<i64> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::from(std::vector<i64> shape, std::vector<double> data) {
  Tensor t;
  i64 n = 1;
  for (i64 d : shape) n *= d;
  if (n != i64(data.size())) {
    raise(Err::shape_mismatch,
          strfmt("data length %zu does not match shape product %lld",
                 data.size(), (long long)n));
  }
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

i64 Tensor::rows() const {
  if (shape_.size() <= 1) return shape_.empty() ? 0 : 1;
  i64 r = 1;
  for (size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
  return r;
}

i64 Tensor::cols() const {
  return shape_.empty() ? 0 : shape_.back();
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  if (has(name)) raise(Err::config_error, "duplicate parameter '" + name + "'");
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    raise(Err::config_error, "unknown parameter '" + name + "'");
  }
  return items_[it->second].second;
}

const Tensor& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    raise(Err::config_error, "unknown parameter '" + name + "'");
  }
  return items_[it->second].second;
}

i64 ParamSet::total_elements() const {
  i64 n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : items_) out.add(name, Tensor(t.shape()));
  return out;
}

void ParamSet::fill(double v) {
  for (auto& [name, t] : items_) t.fill(v);
}

}  // namespace mpl
