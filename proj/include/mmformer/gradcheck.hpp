#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mmformer/autodiff.hpp"

namespace mmf::ad {

// Scalar-valued function of several tensors, built on a fresh tape each call.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Upper bound on checked coordinates per input; 0 checks all of them.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

// max over checked coordinates of |autodiff - central difference| / max(1, |central difference|).
double grad_check(const ScalarFn& f, std::span<const Tensor> points,
                  const GradCheckOptions& options = {});

// Single-input convenience overload.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point,
                  double eps = 1e-5);

}  // namespace mmf::ad
