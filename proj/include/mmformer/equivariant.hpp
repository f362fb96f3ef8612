#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "mmformer/params.hpp"
#include "mmformer/partitions.hpp"

namespace mmf {

// How a basis element collapses the input positions that no output position is tied to.
// sum: plain contraction. mean: contraction divided by the number of summed tuples, which keeps
// activations on the same scale for every J.
enum class Aggregation { sum, mean };

// Permutation-equivariant linear map from order-m to order-n joint tensors.
// x: (J^m, d_in) with the joint tuple flattened row-major; coeffs: (Bell(m+n), d_in, d_out), one
// matrix per partition in enumerate_partitions order; bias: (Bell(n), d_out), or an invalid Var
// for none. Returns (J^n, d_out).
ad::Var equivariant_linear(ad::Var x, ad::Var coeffs, ad::Var bias, std::size_t joints,
                           std::size_t m, std::size_t n, Aggregation agg);

// Parameter shapes and initialisation for one layer, registered under `prefix`.
struct EquivariantLinearSpec {
  std::size_t m = 1, n = 1, d_in = 1, d_out = 1;
  Aggregation agg = Aggregation::mean;
  bool with_bias = true;
};

void init_equivariant_linear(ParamSet& params, const std::string& prefix,
                             const EquivariantLinearSpec& spec, std::mt19937_64& rng);

ad::Var apply_equivariant_linear(Binding& bind, const std::string& prefix,
                                 const EquivariantLinearSpec& spec, ad::Var x,
                                 std::size_t joints);

}  // namespace mmf
