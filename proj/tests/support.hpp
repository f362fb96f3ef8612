#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <string>
#include <numeric>
#include <random>
#include <vector>

#include "mmformer/gradcheck.hpp"
#include "mmformer/ops.hpp"
#include "mmformer/params.hpp"
#include "mmformer/partitions.hpp"
#include "mmformer/tensor.hpp"

namespace testing {

inline mmf::Tensor random_tensor(const mmf::Shape& shape, std::mt19937_64& rng,
                                 double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  mmf::Tensor t(shape);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Relabels joints in a (J^order, width) tensor: row (s(i_1), ..., s(i_m)) of the result is row
// (i_1, ..., i_m) of x.
inline mmf::Tensor permute_joints(const mmf::Tensor& x, const std::vector<std::size_t>& s,
                                  std::size_t order) {
  const std::size_t joints = s.size();
  const std::size_t rows = mmf::int_pow(joints, order);
  const std::size_t width = x.size() / rows;
  mmf::Tensor out(x.shape());
  std::vector<std::size_t> digits(order);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t rem = r;
    for (std::size_t q = order; q-- > 0;) {
      digits[q] = rem % joints;
      rem /= joints;
    }
    std::size_t target = 0;
    for (std::size_t q = 0; q < order; ++q) target = target * joints + s[digits[q]];
    std::copy_n(x.raw() + r * width, width, out.raw() + target * width);
  }
  return out;
}

// Scalar readout sum(y * w) with a fixed weight tensor, so no output entry cancels by symmetry.
inline mmf::ad::Var readout(mmf::ad::Var y, const mmf::Tensor& w) {
  return mmf::ad::sum_all(mmf::ad::mul(y, y.tape()->constant(w)));
}

// Gradient check over the extra input tensors and every parameter of `params`.
using ParamFn = std::function<mmf::ad::Var(mmf::Binding&, std::span<const mmf::ad::Var>)>;

inline double param_grad_check(const mmf::ParamSet& params, const std::vector<mmf::Tensor>& extra,
                               const ParamFn& f, const mmf::ad::GradCheckOptions& opts = {}) {
  std::vector<mmf::Tensor> pts = extra;
  for (std::size_t k = 0; k < params.size(); ++k) pts.push_back(params.value(k));
  return mmf::ad::grad_check(
      [&](mmf::ad::Tape& tape, std::span<const mmf::ad::Var> v) {
        mmf::Binding bind(tape, params, true);
        for (std::size_t k = 0; k < params.size(); ++k) {
          bind.bind_as(params.name(k), v[extra.size() + k]);
        }
        return f(bind, v.subspan(0, extra.size()));
      },
      pts, opts);
}

}  // namespace testing
