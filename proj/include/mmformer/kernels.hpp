#pragma once

#include <cstddef>
#include <span>

// Dense inner loops used by every layer. Each kernel has an OpenMP version (the default,
// used by the library) and a straight serial reference in kernels::serial kept for tests
// and the benchmark target.
namespace mmf::kernels {

enum class Trans { no, yes };

// c (m x n) = alpha * op(a) * op(b) + beta * c, row-major.
// op(a) is m x k, op(b) is k x n. With Trans::yes the stored matrix is the transpose.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta,
          std::span<double> c);

// Max-subtracted softmax applied in place to each row of a rows x cols matrix.
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);

// Backward of softmax_rows: dx = y * (dy - rowsum(dy * y)), written to dx.
void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta,
          std::span<double> c);
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);
void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols);

}  // namespace serial

int thread_count();

}  // namespace mmf::kernels
