#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mmf {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of 64-bit reals. Plain value type; autodiff lives in ad::Var.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t mode) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;
  std::size_t offset(std::span<const std::size_t> index) const;

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value);
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class ReduceOp { sum, mean, max };

// Shape algebra. Modes are zero-based.

// Rows index `mode`; columns enumerate the remaining modes in ascending order, row-major.
Tensor matricize(const Tensor& t, std::size_t mode);
Tensor dematricize(const Tensor& mat, std::size_t mode, const Shape& shape);

// out[i_perm[0], i_perm[1], ...] = in[i_0, i_1, ...]; out.dim(k) == in.dim(perm[k]).
Tensor permute_modes(const Tensor& t, std::span<const std::size_t> perm);
Tensor permute_modes(const Tensor& t, std::initializer_list<std::size_t> perm);

Tensor concat(std::span<const Tensor> parts, std::size_t mode);
Tensor slice(const Tensor& t, std::size_t mode, std::size_t start, std::size_t length);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor reduce(const Tensor& t, std::size_t mode, ReduceOp op);
Tensor dropout(const Tensor& t, const Tensor& mask);
Tensor softmax_rows(const Tensor& x);

double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

}  // namespace mmf
