#pragma once

// Dense row-major tensor of doubles. The single numeric carrier for values,
// activations and gradients throughout the library. No broadcasting, no
// views; transposition and reshape materialize or relabel contiguous data.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace timemachine {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    for (auto d : shape_)
      if (d == 0) throw DimensionError("zero axis extent in " + shape_str(shape_));
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
      throw DimensionError("data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // extent of the last axis, and the number of rows when the tensor is
  // viewed as [rows, last]
  std::size_t last_dim() const {
    if (shape_.empty()) throw DimensionError("last_dim of rank-0 tensor");
    return shape_.back();
  }
  std::size_t rows() const { return size() / last_dim(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_finite(const char* where) const {
    if (!all_finite())
      throw NumericError(std::string("non-finite value produced by ") + where);
  }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != size())
      throw DimensionError("reshape " + shape_str(shape_) + " -> " + shape_str(s) +
                           " changes element count");
    return Tensor(std::move(s), data_);
  }

  // swap of the last two axes, materialized
  Tensor transposed_last2() const {
    if (rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(shape_));
    Shape s = shape_;
    std::swap(s[rank() - 1], s[rank() - 2]);
    Tensor out(s);
    const std::size_t r = shape_[rank() - 2], c = shape_[rank() - 1];
    const std::size_t mats = size() / (r * c);
    for (std::size_t m = 0; m < mats; ++m) {
      const double* src = data() + m * r * c;
      double* dst = out.data() + m * r * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
    }
    return out;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace timemachine
