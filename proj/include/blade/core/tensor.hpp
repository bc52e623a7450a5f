#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "blade/core/error.hpp"

namespace blade {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using MatMap = Eigen::Map<MatX<S>>;
template <class S>
using ConstMatMap = Eigen::Map<const MatX<S>>;

/// Dense row-major tensor with a dynamic shape. Images and feature maps use
/// NCHW order; plain matrices use {rows, cols}.
template <class S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
    data_.assign(static_cast<size_t>(count(dims_)), S(0));
  }
  Tensor(std::initializer_list<int> dims) : Tensor(std::vector<int>(dims)) {}

  static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }
  static Tensor full(std::vector<int> dims, S value) {
    Tensor t(std::move(dims));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  const std::vector<int>& dims() const { return dims_; }
  long size() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  S& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  S operator[](long i) const { return data_[static_cast<size_t>(i)]; }

  // NCHW access
  S& at(int n, int c, int h, int w) {
    return data_[static_cast<size_t>(((static_cast<long>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
  }
  S at(int n, int c, int h, int w) const {
    return data_[static_cast<size_t>(((static_cast<long>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w)];
  }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
  void set_zero() { fill(S(0)); }

  Tensor reshaped(std::vector<int> dims) const {
    if (count(dims) != size()) throw DataError("tensor reshape: element count mismatch");
    Tensor t = *this;
    t.dims_ = std::move(dims);
    return t;
  }

  /// View as a rows x cols Eigen matrix (rows * cols must equal size()).
  MatMap<S> as_matrix(long rows, long cols) {
    assert(rows * cols == size());
    return MatMap<S>(data(), rows, cols);
  }
  ConstMatMap<S> as_matrix(long rows, long cols) const {
    assert(rows * cols == size());
    return ConstMatMap<S>(data(), rows, cols);
  }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
    os << "]";
    return os.str();
  }

  bool all_finite() const {
    for (S v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  static long count(const std::vector<int>& dims) {
    long n = 1;
    for (int d : dims) n *= d;
    return n;
  }

 private:
  std::vector<int> dims_;
  std::vector<S> data_;
};

using TensorF = Tensor<float>;

template <class S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  assert(a.same_shape(b));
  Tensor<S> r = a;
  for (long i = 0; i < r.size(); ++i) r[i] -= b[i];
  return r;
}

template <class S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  assert(a.same_shape(b));
  Tensor<S> r = a;
  for (long i = 0; i < r.size(); ++i) r[i] += b[i];
  return r;
}

template <class S>
void add_inplace(Tensor<S>& a, const Tensor<S>& b) {
  assert(a.same_shape(b));
  for (long i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <class S>
S max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  assert(a.same_shape(b));
  S m = 0;
  for (long i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace blade
