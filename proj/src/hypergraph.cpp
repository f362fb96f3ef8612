#include "mmformer/hypergraph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mmf {

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

HyperEdgeIndex enumerate_hyperedges(std::size_t joints, std::size_t m) {
  if (m < 1 || m > joints) {
    throw std::invalid_argument("enumerate_hyperedges: order " + std::to_string(m) +
                                " needs 1 <= m <= J = " + std::to_string(joints));
  }
  HyperEdgeIndex index{joints, m, {}};
  index.edges.reserve(binomial(joints, m));
  HyperEdge e(m);
  for (std::size_t q = 0; q < m; ++q) e[q] = q;
  while (true) {
    index.edges.push_back(e);
    // Advance the rightmost position that still has room.
    std::size_t q = m;
    while (q-- > 0) {
      if (e[q] < joints - m + q) break;
      if (q == 0) return index;
    }
    ++e[q];
    for (std::size_t r = q + 1; r < m; ++r) e[r] = e[r - 1] + 1;
  }
}

std::size_t total_hyperedges(std::size_t joints, std::size_t r) {
  if (r > joints) {
    throw std::invalid_argument("total_hyperedges: r = " + std::to_string(r) + " exceeds J = " +
                                std::to_string(joints));
  }
  std::size_t n = 0;
  for (std::size_t m = 1; m <= r; ++m) n += binomial(joints, m);
  return n;
}

Tensor incidence_matrix(std::size_t joints, const std::vector<HyperEdge>& edges) {
  Tensor h({joints, edges.size()}, 0.0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    for (std::size_t v : edges[e]) {
      if (v >= joints) throw std::out_of_range("incidence_matrix: joint index out of range");
      h[v * edges.size() + e] = 1.0;
    }
  }
  return h;
}

Tensor adjacency_from_incidence(const Tensor& h) {
  if (h.rank() != 2) throw std::invalid_argument("adjacency_from_incidence: expects J x E");
  const std::size_t J = h.dim(0), E = h.dim(1);
  for (std::size_t e = 0; e < E; ++e) {
    double ones = 0.0;
    for (std::size_t v = 0; v < J; ++v) {
      const double x = h[v * E + e];
      if (x != 0.0 && x != 1.0) throw std::invalid_argument("incidence must be binary");
      ones += x;
    }
    if (ones != 2.0) {
      throw std::invalid_argument("adjacency_from_incidence: edge " + std::to_string(e) +
                                  " does not join exactly two joints");
    }
  }
  Tensor a = matmul(h, transpose(h));
  for (std::size_t v = 0; v < J; ++v) a[v * J + v] = 0.0;
  return a;
}

Tensor node_degree(const Tensor& h, const std::vector<double>& weights) {
  const std::size_t J = h.dim(0), E = h.dim(1);
  if (!weights.empty() && weights.size() != E) {
    throw std::invalid_argument("node_degree: one weight per edge required");
  }
  Tensor d({J}, 0.0);
  for (std::size_t v = 0; v < J; ++v) {
    for (std::size_t e = 0; e < E; ++e) d[v] += (weights.empty() ? 1.0 : weights[e]) * h[v * E + e];
  }
  return d;
}

Tensor edge_degree(const Tensor& h) {
  const std::size_t J = h.dim(0), E = h.dim(1);
  Tensor d({E}, 0.0);
  for (std::size_t v = 0; v < J; ++v) {
    for (std::size_t e = 0; e < E; ++e) d[e] += h[v * E + e];
  }
  return d;
}

Tensor gcn_update(const Tensor& x, const Tensor& a, const Tensor& theta) {
  const std::size_t J = a.dim(0);
  if (a.rank() != 2 || a.dim(1) != J || x.dim(0) != J) {
    throw std::invalid_argument("gcn_update: A must be J x J and X must have J rows");
  }
  Tensor at = a;
  for (std::size_t v = 0; v < J; ++v) at[v * J + v] += 1.0;
  std::vector<double> inv_sqrt(J);
  for (std::size_t v = 0; v < J; ++v) {
    double deg = 0.0;
    for (std::size_t u = 0; u < J; ++u) deg += at[v * J + u];
    if (deg <= 0.0) throw std::invalid_argument("gcn_update: nonpositive degree");
    inv_sqrt[v] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t v = 0; v < J; ++v) {
    for (std::size_t u = 0; u < J; ++u) at[v * J + u] *= inv_sqrt[v] * inv_sqrt[u];
  }
  return relu(matmul(matmul(at, x), theta));
}

Tensor hgcn_propagation(const Tensor& h, const std::vector<double>& weights) {
  const std::size_t J = h.dim(0), E = h.dim(1);
  const Tensor dv = node_degree(h, weights);
  const Tensor de = edge_degree(h);
  for (std::size_t v = 0; v < J; ++v) {
    if (dv[v] <= 0.0) throw std::invalid_argument("hgcn_update: joint " + std::to_string(v) +
                                                  " has zero degree");
  }
  for (std::size_t e = 0; e < E; ++e) {
    if (de[e] <= 0.0) throw std::invalid_argument("hgcn_update: edge " + std::to_string(e) +
                                                  " is empty");
  }
  // H W De^-1 scaled per column, then H^T; rows and columns scaled by Dv^{1/2}.
  Tensor hw = h;
  for (std::size_t v = 0; v < J; ++v) {
    for (std::size_t e = 0; e < E; ++e) {
      hw[v * E + e] *= (weights.empty() ? 1.0 : weights[e]) / de[e];
    }
  }
  Tensor p = matmul(hw, transpose(h));
  for (std::size_t v = 0; v < J; ++v) {
    for (std::size_t u = 0; u < J; ++u) p[v * J + u] *= std::sqrt(dv[v]) * std::sqrt(dv[u]);
  }
  return p;
}

Tensor hgcn_update(const Tensor& x, const Tensor& h, const std::vector<double>& weights,
                   const Tensor& theta) {
  if (h.rank() != 2 || x.dim(0) != h.dim(0)) {
    throw std::invalid_argument("hgcn_update: X must have one row per joint of H");
  }
  return relu(matmul(matmul(hgcn_propagation(h, weights), x), theta));
}

}  // namespace mmf
