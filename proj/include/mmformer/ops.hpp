#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmformer/autodiff.hpp"
#include "mmformer/kernels.hpp"

// Differentiable kernels over ad::Var. Every op validates shapes and throws
// std::invalid_argument on mismatch.
namespace mmf::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);

// op(a) * op(b) for matrices.
Var matmul(Var a, Var b, kernels::Trans ta = kernels::Trans::no,
           kernels::Trans tb = kernels::Trans::no);
// Batched: a (G, p, q) times b (G, q, r) -> (G, p, r).
Var batched_matmul(Var a, Var b);
// x (rows, cols) + bias (cols) broadcast over rows.
Var add_bias(Var x, Var bias);

Var reshape(Var a, Shape shape);
Var permute(Var a, std::vector<std::size_t> perm);
Var concat(std::span<const Var> parts, std::size_t mode);
Var slice(Var a, std::size_t mode, std::size_t start, std::size_t length);

Var reduce(Var a, std::size_t mode, ReduceOp op);
Var sum_all(Var a);
Var mean_all(Var a);

Var softmax_rows(Var x);
// Multiplies by a fixed mask (already scaled by the keep probability).
Var dropout(Var x, const Tensor& mask);
// Divides each column by its Euclidean norm (plus eps).
Var normalize_columns(Var x, double eps = 1e-12);

// -log softmax(logits)[label] for a logits vector of any shape with `classes` entries.
Var cross_entropy(Var logits, std::size_t label);

}  // namespace mmf::ad
