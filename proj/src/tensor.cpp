#include "ampnet/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace ampnet {

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

Tensor checked(Tensor t, const char* where) {
  t.check_finite(where);
  return t;
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, Scalar fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<Scalar> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape (" +
                         std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  check_finite("Tensor");
}

Tensor Tensor::from(std::initializer_list<std::initializer_list<Scalar>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<Scalar> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor::from: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::row(std::span<const Scalar> values) {
  return Tensor(1, values.size(), std::vector<Scalar>(values.begin(), values.end()));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1;
  return t;
}

std::string Tensor::shape_str() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

void Tensor::fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  for (Scalar v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const Tensor& Tensor::check_finite(const char* where) const {
  if (!all_finite()) throw NonFiniteError(std::string(where) + ": non-finite value in tensor " + shape_str());
  return *this;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor c(n, m);
  Scalar* cp = c.data();
  const Scalar* ap = a.data();
  const Scalar* bp = b.data();
  // i-k-j order: each output element still sums over k in ascending order.
  for (std::size_t i = 0; i < n; ++i) {
    Scalar* crow = cp + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const Scalar av = ap[i * k + kk];
      const Scalar* brow = bp + kk * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return checked(std::move(c), "matmul");
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_bt", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar* arow = a.data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const Scalar* brow = b.data() + j * k;
      Scalar s = 0;
      for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      c(i, j) = s;
    }
  }
  return checked(std::move(c), "matmul_bt");
}

Tensor matmul_at(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_mismatch("matmul_at", a, b);
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  Tensor c(n, m);
  Scalar* cp = c.data();
  for (std::size_t kk = 0; kk < k; ++kk) {
    const Scalar* arow = a.data() + kk * n;
    const Scalar* brow = b.data() + kk * m;
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar av = arow[i];
      if (av == 0) continue;
      Scalar* crow = cp + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return checked(std::move(c), "matmul_at");
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  if (!a.same_shape(b)) shape_mismatch("elementwise", a, b);
  Tensor c(a.rows(), a.cols());
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
      break;
    case ElementwiseOp::kMul:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
      break;
  }
  return checked(std::move(c), "elementwise");
}

Tensor scale(const Tensor& a, Scalar s) {
  Tensor c = a;
  for (auto& v : c.values()) v *= s;
  return checked(std::move(c), "scale");
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_mismatch("add_inplace", a, b);
  Scalar* ap = a.data();
  const Scalar* bp = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) ap[i] += bp[i];
  a.check_finite("add_inplace");
}

void add_row_inplace(Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_mismatch("add_row_inplace", a, row);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Scalar* ar = a.data() + i * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) ar[j] += row[j];
  }
  a.check_finite("add_row_inplace");
}

Tensor sum_rows(const Tensor& a) {
  Tensor s(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s[j] += a(i, j);
  return checked(std::move(s), "sum_rows");
}

Tensor hconcat(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_mismatch("hconcat", parts.front(), p);
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    Scalar* dst = out.data() + i * cols;
    for (const auto& p : parts) {
      const Scalar* src = p.data() + i * p.cols();
      dst = std::copy(src, src + p.cols(), dst);
    }
  }
  return out;
}

Tensor column_slice(const Tensor& a, std::size_t begin, std::size_t width) {
  if (begin + width > a.cols()) {
    throw DimensionError("column_slice: [" + std::to_string(begin) + ", " + std::to_string(begin + width) +
                         ") out of range for " + a.shape_str());
  }
  Tensor out(a.rows(), width);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const Scalar* src = a.data() + i * a.cols() + begin;
    std::copy(src, src + width, out.data() + i * width);
  }
  return out;
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_mismatch("vstack", parts.front(), p);
    rows += p.rows();
  }
  std::vector<Scalar> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
  return Tensor(rows, cols, std::move(data));
}

Tensor row_slice(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows())
    throw DimensionError("row_slice: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + a.shape_str());
  const auto* first = a.data() + begin * a.cols();
  return Tensor(count, a.cols(), std::vector<Scalar>(first, first + count * a.cols()));
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size()) {
    throw DimensionError("reshape: cannot reshape " + a.shape_str() + " to (" + std::to_string(rows) + "x" +
                         std::to_string(cols) + ")");
  }
  return Tensor(rows, cols, std::vector<Scalar>(a.values().begin(), a.values().end()));
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0 ? v : Scalar(0);
  return checked(std::move(y), "relu");
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = Scalar(1) / (Scalar(1) + std::exp(-v));
  return checked(std::move(y), "sigmoid");
}

Tensor tanh(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = std::tanh(v);
  return checked(std::move(y), "tanh");
}

Tensor softmax_rows(const Tensor& x) {
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row_span(i);
    const Scalar mx = *std::max_element(row.begin(), row.end());
    Scalar sum = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      y(i, j) = std::exp(row[j] - mx);
      sum += y(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= sum;
  }
  return checked(std::move(y), "softmax_rows");
}

Tensor relu_backward(const Tensor& x, const Tensor& g) {
  if (!x.same_shape(g)) shape_mismatch("relu_backward", x, g);
  Tensor dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x[i] > 0)) dx[i] = 0;
  return checked(std::move(dx), "relu_backward");
}

Tensor sigmoid_backward(const Tensor& x, const Tensor& g) {
  if (!x.same_shape(g)) shape_mismatch("sigmoid_backward", x, g);
  Tensor s = sigmoid(x);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = g[i] * s[i] * (Scalar(1) - s[i]);
  return checked(std::move(s), "sigmoid_backward");
}

Tensor tanh_backward(const Tensor& x, const Tensor& g) {
  if (!x.same_shape(g)) shape_mismatch("tanh_backward", x, g);
  Tensor t = tanh(x);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = g[i] * (Scalar(1) - t[i] * t[i]);
  return checked(std::move(t), "tanh_backward");
}

Tensor softmax_rows_backward(const Tensor& x, const Tensor& g) {
  if (!x.same_shape(g)) shape_mismatch("softmax_rows_backward", x, g);
  Tensor s = softmax_rows(x);
  Tensor dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    Scalar dot = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) dot += g(i, j) * s(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) dx(i, j) = s(i, j) * (g(i, j) - dot);
  }
  return checked(std::move(dx), "softmax_rows_backward");
}

}  // namespace ampnet
