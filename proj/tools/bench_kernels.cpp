// Serial reference kernels against the OpenMP ones. The serial softmax backward forms the full
// per-row Jacobian, so it is quadratic in the row length and only run up to 256 columns.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mmformer/kernels.hpp"

namespace k = mmf::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n, 0.0);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gemm(k::Trans::no, k::Trans::no, n, n, n, 1.0, a, b, 0.0, c);
    } else {
      k::serial::gemm(k::Trans::no, k::Trans::no, n, n, n, 1.0, a, b, 0.0, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_softmax_rows(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = rows;
  const auto src = random_vec(rows * cols, 3);
  std::vector<double> x(src.size());
  for (auto _ : state) {
    x = src;
    if constexpr (Parallel) {
      k::softmax_rows(x, rows, cols);
    } else {
      k::serial::softmax_rows(x, rows, cols);
    }
    benchmark::DoNotOptimize(x.data());
  }
}

template <bool Parallel>
void BM_softmax_rows_backward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = rows;
  auto y = random_vec(rows * cols, 4);
  k::serial::softmax_rows(y, rows, cols);
  const auto dy = random_vec(rows * cols, 5);
  std::vector<double> dx(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::softmax_rows_backward(y, dy, dx, rows, cols);
    } else {
      k::serial::softmax_rows_backward(y, dy, dx, rows, cols);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/serial")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_gemm<true>)->Name("gemm/omp")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_softmax_rows<false>)->Name("softmax_rows/serial")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(BM_softmax_rows<true>)->Name("softmax_rows/omp")->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(BM_softmax_rows_backward<false>)->Name("softmax_backward/serial")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_softmax_rows_backward<true>)->Name("softmax_backward/omp")->RangeMultiplier(4)->Range(16, 1024);

BENCHMARK_MAIN();
