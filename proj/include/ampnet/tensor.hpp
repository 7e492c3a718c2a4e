#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ampnet {

// Element precision is fixed per build. The default library is double; the
// `_f32` targets define AMPNET_SINGLE_PRECISION.
#ifdef AMPNET_SINGLE_PRECISION
using Scalar = float;
#else
using Scalar = double;
#endif

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Dense row-major matrix of rank <= 2. A row vector is 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Scalar fill = Scalar(0));
  Tensor(std::size_t rows, std::size_t cols, std::vector<Scalar> data);

  /// Nested-list construction, mostly for tests: Tensor::from({{1, 2}, {3, 4}}).
  static Tensor from(std::initializer_list<std::initializer_list<Scalar>> rows);
  static Tensor row(std::span<const Scalar> values);
  static Tensor scalar(Scalar v) { return Tensor(1, 1, v); }
  static Tensor identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Scalar& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Scalar operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  std::span<const Scalar> values() const noexcept { return data_; }
  std::span<Scalar> values() noexcept { return data_; }
  std::span<const Scalar> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  void fill(Scalar v);
  bool all_finite() const noexcept;
  /// Throws NonFiniteError naming `where` if any element is NaN or Inf.
  const Tensor& check_finite(const char* where) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Scalar> data_;
};

enum class ElementwiseOp { kAdd, kSub, kMul };

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_bt(const Tensor& a, const Tensor& b);
/// a^T * b without materializing the transpose.
Tensor matmul_at(const Tensor& a, const Tensor& b);

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::kAdd); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::kSub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseOp::kMul); }
Tensor scale(const Tensor& a, Scalar c);
Tensor transpose(const Tensor& a);

/// In-place a += b; shapes must match.
void add_inplace(Tensor& a, const Tensor& b);
/// Adds a 1 x cols row to every row of a.
void add_row_inplace(Tensor& a, const Tensor& row);
/// Column sums as a 1 x cols tensor.
Tensor sum_rows(const Tensor& a);

/// Column-wise concatenation; all parts must have the same row count.
Tensor hconcat(std::span<const Tensor> parts);
/// Column slice [begin, begin + width).
Tensor column_slice(const Tensor& a, std::size_t begin, std::size_t width);
/// Row-wise stacking; all parts must have the same column count.
Tensor vstack(std::span<const Tensor> parts);
/// Row slice [begin, begin + count).
Tensor row_slice(const Tensor& a, std::size_t begin, std::size_t count = 1);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

// Input-gradient counterparts: given forward input x and upstream gradient g.
Tensor relu_backward(const Tensor& x, const Tensor& g);
Tensor sigmoid_backward(const Tensor& x, const Tensor& g);
Tensor tanh_backward(const Tensor& x, const Tensor& g);
/// Gradient of softmax_rows w.r.t. its input, given the forward input.
Tensor softmax_rows_backward(const Tensor& x, const Tensor& g);

}  // namespace ampnet
