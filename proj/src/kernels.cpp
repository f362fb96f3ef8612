#include "mmformer/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmf::kernels {

namespace {

void check_gemm_sizes(std::size_t m, std::size_t n, std::size_t k, std::size_t a_size,
                      std::size_t b_size, std::size_t c_size) {
  if (a_size < m * k || b_size < k * n || c_size < m * n) {
    throw std::invalid_argument("gemm: buffer too small for requested shape");
  }
}

void scale_c(double beta, std::span<double> c, std::size_t count) {
  if (beta == 0.0) {
    std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(count), 0.0);
  } else if (beta != 1.0) {
    for (std::size_t i = 0; i < count; ++i) c[i] *= beta;
  }
}

// Row block of c computed by one thread: rows [r0, r1).
void gemm_rows(Trans ta, Trans tb, std::size_t r0, std::size_t r1, std::size_t n,
               std::size_t k, double alpha, const double* a, const double* b, double* c,
               std::size_t m) {
  if (tb == Trans::no) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = alpha * (ta == Trans::no ? a[i * k + p] : a[p * m + i]);
        if (aip == 0.0) continue;
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  } else {
    // b stored n x k: c_ij = sum_p a_ip b_jp, contiguous in p for both when ta == no.
    if (ta == Trans::no) {
      for (std::size_t i = r0; i < r1; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double* bj = b + j * k;
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
          ci[j] += alpha * acc;
        }
      }
    } else {
      for (std::size_t i = r0; i < r1; ++i) {
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double* bj = b + j * k;
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * bj[p];
          ci[j] += alpha * acc;
        }
      }
    }
  }
}

}  // namespace

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta,
          std::span<double> c) {
  check_gemm_sizes(m, n, k, a.size(), b.size(), c.size());
  scale_c(beta, c, m * n);
  if (m == 0 || n == 0 || k == 0) return;
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const std::size_t work = m * n * k;
  if (work < (1u << 15) || thread_count() == 1) {
    gemm_rows(ta, tb, 0, m, n, k, alpha, pa, pb, pc, m);
    return;
  }
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_rows(ta, tb, r, r + 1, n, k, alpha, pa, pb, pc, m);
  }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
  if (x.size() < rows * cols) throw std::invalid_argument("softmax_rows: buffer too small");
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
  for (std::ptrdiff_t r = 0; r < nrows; ++r) {
    double* row = x.data() + static_cast<std::size_t>(r) * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
  }
}

void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols) {
  const auto nrows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > 4096)
  for (std::ptrdiff_t r = 0; r < nrows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    double inner = 0.0;
    for (std::size_t j = 0; j < cols; ++j) inner += y[base + j] * dy[base + j];
    for (std::size_t j = 0; j < cols; ++j) {
      dx[base + j] = y[base + j] * (dy[base + j] - inner);
    }
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = std::min(x.size(), y.size());
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta,
          std::span<double> c) {
  check_gemm_sizes(m, n, k, a.size(), b.size(), c.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = ta == Trans::no ? a[i * k + p] : a[p * m + i];
        const double bpj = tb == Trans::no ? b[p * n + j] : b[j * k + p];
        acc += aip * bpj;
      }
      c[i * n + j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * c[i * n + j]);
    }
  }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = x.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < cols; ++j) row[j] = std::exp(row[j] - mx) / total;
  }
}

void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t q = 0; q < cols; ++q) {
        const double jac = y[r * cols + q] * ((q == j ? 1.0 : 0.0) - y[r * cols + j]);
        acc += jac * dy[r * cols + q];
      }
      dx[r * cols + j] = acc;
    }
  }
}

}  // namespace serial

}  // namespace mmf::kernels
