#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "skillstep/common.hpp"

namespace skillstep {

/// Dense row-major float32 tensor. Copies share the underlying buffer;
/// use clone() for an independent copy. Rank is 1 or 2 everywhere in this
/// library (vectors and weight matrices).
class Tensor {
 public:
  Tensor() : shape_{0}, buf_(std::make_shared<std::vector<float>>()) {}

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<float>>(checked_numel(shape_), 0.0f)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, float v) {
    Tensor t(std::move(shape));
    std::fill(t.buf_->begin(), t.buf_->end(), v);
    return t;
  }

  static Tensor from(std::vector<float> v) {
    Tensor t;
    t.shape_ = {static_cast<int>(v.size())};
    t.buf_ = std::make_shared<std::vector<float>>(std::move(v));
    return t;
  }

  int numel() const { return static_cast<int>(buf_->size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }

  float* data() { return buf_->data(); }
  const float* data() const { return buf_->data(); }
  float& at(int i) { return (*buf_)[static_cast<size_t>(i)]; }
  float at(int i) const { return (*buf_)[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (float v : *buf_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<float>>(*buf_);
    return t;
  }

  void fill(float v) { std::fill(buf_->begin(), buf_->end(), v); }

  /// Fill with U(-bound, bound) draws from the given generator.
  void fill_uniform(std::mt19937& rng, float bound) {
    std::uniform_real_distribution<float> d(-bound, bound);
    for (float& v : *buf_) v = d(rng);
  }

  bool bitwise_equal(const Tensor& o) const {
    if (shape_ != o.shape_) return false;
    return std::memcmp(buf_->data(), o.buf_->data(), buf_->size() * sizeof(float)) == 0;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
  }

 private:
  static size_t checked_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw UsageError("Tensor: negative dimension");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::shared_ptr<std::vector<float>> buf_;
};

}  // namespace skillstep
