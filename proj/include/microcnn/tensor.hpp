#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <cblas.h>

#include "microcnn/errors.hpp"

namespace microcnn {

using shape_list = std::vector<std::int64_t>;

namespace detail {

inline std::string shape_str(const shape_list& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline std::int64_t shape_product(const shape_list& shape) {
  std::int64_t p = 1;
  for (auto e : shape) p *= e;
  return p;
}

inline void check_shape(const shape_list& shape) {
  if (shape.empty()) throw shape_error("empty shape list");
  for (auto e : shape) {
    if (e < 1)
      throw shape_error("non-positive extent in shape " + shape_str(shape));
  }
}

}  // namespace detail

// Dense row-major array of float or double with shape metadata. Values are
// owned; copies are deep. A default-constructed tensor is empty and only
// serves as an "absent" placeholder.
template <class T>
class tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  using value_type = T;

  tensor() = default;

  static tensor zeros(const shape_list& shape) {
    detail::check_shape(shape);
    return tensor(shape, std::vector<T>(
                             static_cast<std::size_t>(detail::shape_product(shape)),
                             T(0)));
  }

  static tensor from_values(const shape_list& shape, std::vector<T> values) {
    detail::check_shape(shape);
    const auto expected = detail::shape_product(shape);
    if (std::cmp_not_equal(values.size(), expected)) {
      throw shape_error("value count " + std::to_string(values.size()) +
                        " does not fill shape " + detail::shape_str(shape));
    }
    return tensor(shape, std::move(values));
  }

  const shape_list& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<const T> values() const { return data_; }
  std::span<T> values() { return data_; }
  const T* data() const { return data_.data(); }
  T* data() { return data_.data(); }

  T operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

  static constexpr const char* precision() {
    return sizeof(T) == 4 ? "single" : "double";
  }

  // Same flat data under a new shape; sizes must match.
  tensor reshaped(const shape_list& shape) const {
    detail::check_shape(shape);
    if (detail::shape_product(shape) != size()) {
      throw shape_error("cannot reshape " + detail::shape_str(shape_) + " to " +
                        detail::shape_str(shape));
    }
    return tensor(shape, data_);
  }

  bool same_shape(const tensor& other) const { return shape_ == other.shape_; }

  bool operator==(const tensor& other) const = default;

 private:
  tensor(shape_list shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  shape_list shape_;
  std::vector<T> data_;
};

template <class T, class F>
tensor<T> map_elementwise(const tensor<T>& t, F&& f) {
  std::vector<T> out(t.values().begin(), t.values().end());
  for (auto& v : out) v = f(v);
  return tensor<T>::from_values(t.shape(), std::move(out));
}

enum class binary_op { add, sub, mul };

template <class T>
tensor<T> elementwise_binary(const tensor<T>& a, const tensor<T>& b,
                             binary_op op) {
  if (!a.same_shape(b)) {
    throw shape_error("elementwise shapes differ: " +
                      detail::shape_str(a.shape()) + " vs " +
                      detail::shape_str(b.shape()));
  }
  std::vector<T> out(static_cast<std::size_t>(a.size()));
  const T* pa = a.data();
  const T* pb = b.data();
  switch (op) {
    case binary_op::add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
      break;
    case binary_op::sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
      break;
    case binary_op::mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
      break;
  }
  return tensor<T>::from_values(a.shape(), std::move(out));
}

namespace detail {

inline void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
                 std::int64_t k, const float* a, std::int64_t lda,
                 const float* b, std::int64_t ldb, float* c, std::int64_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0f, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), 0.0f, c,
              static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n,
                 std::int64_t k, const double* a, std::int64_t lda,
                 const double* b, std::int64_t ldb, double* c,
                 std::int64_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), 1.0, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), 0.0, c,
              static_cast<int>(ldc));
}

}  // namespace detail

// Matrix product of rank-2 tensors, with optional operand transposition.
template <class T>
tensor<T> matmul(const tensor<T>& a, const tensor<T>& b, bool trans_a = false,
                 bool trans_b = false) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw shape_error("matmul requires rank-2 operands, got " +
                      detail::shape_str(a.shape()) + " and " +
                      detail::shape_str(b.shape()));
  }
  const std::int64_t m = trans_a ? a.extent(1) : a.extent(0);
  const std::int64_t ka = trans_a ? a.extent(0) : a.extent(1);
  const std::int64_t kb = trans_b ? b.extent(1) : b.extent(0);
  const std::int64_t n = trans_b ? b.extent(0) : b.extent(1);
  if (ka != kb) {
    throw shape_error("matmul inner extents differ: " +
                      detail::shape_str(a.shape()) + " x " +
                      detail::shape_str(b.shape()));
  }
  tensor<T> c = tensor<T>::zeros({m, n});
  detail::gemm(trans_a, trans_b, m, n, ka, a.data(), a.extent(1), b.data(),
               b.extent(1), c.data(), n);
  return c;
}

// Row-wise argmax of a rank-2 tensor; ties resolve to the lowest index.
template <class T>
std::vector<std::int64_t> argmax_last_axis(const tensor<T>& t) {
  if (t.rank() != 2) {
    throw shape_error("argmax_last_axis requires rank 2, got " +
                      detail::shape_str(t.shape()));
  }
  const std::int64_t rows = t.extent(0);
  const std::int64_t cols = t.extent(1);
  std::vector<std::int64_t> out(static_cast<std::size_t>(rows));
  const T* p = t.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t best = 0;
    T best_value = p[r * cols];
    for (std::int64_t c = 1; c < cols; ++c) {
      if (p[r * cols + c] > best_value) {
        best_value = p[r * cols + c];
        best = c;
      }
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

}  // namespace microcnn
