#include "mmformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mmformer/kernels.hpp"

namespace mmf {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<std::size_t>{});
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match " +
                                std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t mode) const {
  if (mode >= shape_.size()) {
    throw std::out_of_range("Tensor::dim: mode " + std::to_string(mode) +
                            " out of range for " + shape_str(shape_));
  }
  return shape_[mode];
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw std::out_of_range("Tensor: index rank mismatch");
  std::size_t off = 0;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= shape_[k]) throw std::out_of_range("Tensor: index out of range");
    off = off * shape_[k] + index[k];
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size()) {
    throw std::invalid_argument("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor permute_modes(const Tensor& t, std::span<const std::size_t> perm) {
  const std::size_t rank = t.rank();
  if (perm.size() != rank) throw std::invalid_argument("permute_modes: wrong permutation size");
  std::vector<bool> seen(rank, false);
  for (std::size_t p : perm) {
    if (p >= rank || seen[p]) throw std::invalid_argument("permute_modes: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(rank);
  for (std::size_t k = 0; k < rank; ++k) out_shape[k] = t.dim(perm[k]);
  Tensor out(out_shape);
  if (t.size() == 0) return out;

  // Stride in the input for each output mode.
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t k = rank; k-- > 1;) in_stride[k - 1] = in_stride[k] * t.dim(k);
  std::vector<std::size_t> stride(rank);
  for (std::size_t k = 0; k < rank; ++k) stride[k] = in_stride[perm[k]];

  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  const auto in = t.data();
  auto dst = out.data();
  for (std::size_t n = 0; n < out.size(); ++n) {
    dst[n] = in[src];
    for (std::size_t k = rank; k-- > 0;) {
      if (++idx[k] < out_shape[k]) {
        src += stride[k];
        break;
      }
      src -= stride[k] * (out_shape[k] - 1);
      idx[k] = 0;
    }
  }
  return out;
}

Tensor permute_modes(const Tensor& t, std::initializer_list<std::size_t> perm) {
  return permute_modes(t, std::span<const std::size_t>(perm.begin(), perm.size()));
}

Tensor matricize(const Tensor& t, std::size_t mode) {
  if (mode >= t.rank()) {
    throw std::out_of_range("matricize: mode " + std::to_string(mode) + " out of range for " +
                            shape_str(t.shape()));
  }
  std::vector<std::size_t> perm{mode};
  for (std::size_t k = 0; k < t.rank(); ++k) {
    if (k != mode) perm.push_back(k);
  }
  const std::size_t rows = t.dim(mode);
  const std::size_t cols = rows == 0 ? 0 : t.size() / rows;
  return permute_modes(t, perm).reshaped({rows, cols});
}

Tensor dematricize(const Tensor& mat, std::size_t mode, const Shape& shape) {
  if (mode >= shape.size()) throw std::out_of_range("dematricize: mode out of range");
  if (mat.rank() != 2 || mat.dim(0) != shape[mode] || mat.size() != shape_size(shape)) {
    throw std::invalid_argument("dematricize: matrix " + shape_str(mat.shape()) +
                                " incompatible with " + shape_str(shape));
  }
  Shape permuted{shape[mode]};
  std::vector<std::size_t> inverse(shape.size());
  inverse[mode] = 0;
  std::size_t pos = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k == mode) continue;
    permuted.push_back(shape[k]);
    inverse[k] = pos++;
  }
  return permute_modes(mat.reshaped(permuted), inverse);
}

Tensor concat(std::span<const Tensor> parts, std::size_t mode) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (mode >= first.size()) throw std::out_of_range("concat: mode out of range");
  Shape out_shape = first;
  out_shape[mode] = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != first.size()) throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t k = 0; k < first.size(); ++k) {
      if (k != mode && p.dim(k) != first[k]) {
        throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                                    shape_str(first));
      }
    }
    out_shape[mode] += p.dim(mode);
  }
  std::size_t outer = 1;
  for (std::size_t k = 0; k < mode; ++k) outer *= first[k];
  std::size_t inner = 1;
  for (std::size_t k = mode + 1; k < first.size(); ++k) inner *= first[k];

  Tensor out(out_shape);
  auto dst = out.data();
  std::size_t write = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (const Tensor& p : parts) {
      const std::size_t chunk = p.dim(mode) * inner;
      const auto src = p.data().subspan(o * chunk, chunk);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(write));
      write += chunk;
    }
  }
  return out;
}

Tensor slice(const Tensor& t, std::size_t mode, std::size_t start, std::size_t length) {
  if (mode >= t.rank()) throw std::out_of_range("slice: mode out of range");
  if (start + length > t.dim(mode)) throw std::out_of_range("slice: range exceeds extent");
  Shape out_shape = t.shape();
  out_shape[mode] = length;
  std::size_t outer = 1;
  for (std::size_t k = 0; k < mode; ++k) outer *= t.dim(k);
  std::size_t inner = 1;
  for (std::size_t k = mode + 1; k < t.rank(); ++k) inner *= t.dim(k);
  Tensor out(out_shape);
  const auto src = t.data();
  auto dst = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t from = (o * t.dim(mode) + start) * inner;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), length * inner,
                dst.begin() + static_cast<std::ptrdiff_t>(o * length * inner));
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  kernels::gemm(kernels::Trans::no, kernels::Trans::no, a.dim(0), b.dim(1), a.dim(1), 1.0,
                a.data(), b.data(), 0.0, c.data());
  return c;
}

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw std::invalid_argument("transpose: expects a matrix");
  return permute_modes(m, {1, 0});
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor reduce(const Tensor& t, std::size_t mode, ReduceOp op) {
  if (mode >= t.rank()) throw std::out_of_range("reduce: mode out of range");
  const std::size_t extent = t.dim(mode);
  if (extent == 0) throw std::invalid_argument("reduce: empty mode");
  std::size_t outer = 1;
  for (std::size_t k = 0; k < mode; ++k) outer *= t.dim(k);
  std::size_t inner = 1;
  for (std::size_t k = mode + 1; k < t.rank(); ++k) inner *= t.dim(k);
  Shape out_shape;
  for (std::size_t k = 0; k < t.rank(); ++k) {
    if (k != mode) out_shape.push_back(t.dim(k));
  }
  Tensor out(out_shape, op == ReduceOp::max ? -std::numeric_limits<double>::infinity() : 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t e = 0; e < extent; ++e) {
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = t[(o * extent + e) * inner + i];
        double& dst = out[o * inner + i];
        dst = op == ReduceOp::max ? std::max(dst, v) : dst + v;
      }
    }
  }
  if (op == ReduceOp::mean) {
    for (double& v : out.data()) v /= static_cast<double>(extent);
  }
  return out;
}

Tensor dropout(const Tensor& t, const Tensor& mask) {
  require_same_shape(t, mask, "dropout");
  Tensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("softmax_rows: expects a matrix");
  Tensor out = x;
  kernels::softmax_rows(out.data(), x.dim(0), x.dim(1));
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace mmf
