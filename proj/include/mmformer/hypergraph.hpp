#pragma once

#include <cstddef>
#include <vector>

#include "mmformer/tensor.hpp"

namespace mmf {

using HyperEdge = std::vector<std::size_t>;

// All strictly increasing m-tuples over joints 0..J-1 in lexicographic order. This ordering is
// used everywhere edges are laid out (assembly, pooling matrices, exports).
struct HyperEdgeIndex {
  std::size_t joints = 0;
  std::size_t order = 0;
  std::vector<HyperEdge> edges;
};

std::size_t binomial(std::size_t n, std::size_t k);

// Throws std::invalid_argument unless 1 <= m <= J.
HyperEdgeIndex enumerate_hyperedges(std::size_t joints, std::size_t m);
// sum_{m=1..r} binomial(J, m); throws when r > J.
std::size_t total_hyperedges(std::size_t joints, std::size_t r);

// J x E binary incidence, column e marking the joints of edge e.
Tensor incidence_matrix(std::size_t joints, const std::vector<HyperEdge>& edges);

// For a pairwise incidence (every column has exactly two ones): symmetric joint adjacency with a
// zero diagonal, A[i][j] counting the edges that join i and j.
Tensor adjacency_from_incidence(const Tensor& h);

// d(v) = sum_e w(e) h(v, e); an empty weight vector means unit weights.
Tensor node_degree(const Tensor& h, const std::vector<double>& weights = {});
// delta(e) = sum_v h(v, e).
Tensor edge_degree(const Tensor& h);

// ReLU(D^-1/2 (A + I) D^-1/2 X Theta) with D the row sums of A + I.
Tensor gcn_update(const Tensor& x, const Tensor& a, const Tensor& theta);
// ReLU(Dv^1/2 H W De^-1 H^T Dv^1/2 X Theta), with Dv^{+1/2} as printed in the source rule.
// Throws on a zero node or edge degree.
Tensor hgcn_update(const Tensor& x, const Tensor& h, const std::vector<double>& weights,
                   const Tensor& theta);
// The J x J propagation matrix of hgcn_update before X Theta and the ReLU.
Tensor hgcn_propagation(const Tensor& h, const std::vector<double>& weights);

}  // namespace mmf
