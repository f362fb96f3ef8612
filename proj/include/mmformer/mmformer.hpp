#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mmformer/hypergraph.hpp"
#include "mmformer/params.hpp"

namespace mmf {

enum class PoolMethod { avg, max, sum, attn, tri, rank };
enum class Variant { baseline, tp_only, mp_only, mp_tp, tp_mp, two_branch };

// Throw std::invalid_argument on unknown names.
PoolMethod parse_pool_method(std::string_view name);
Variant parse_variant(std::string_view name);
std::string to_string(PoolMethod method);
std::string to_string(Variant variant);

// Column layout of the multi-order tensor: the listed orders in ascending order, each spanning
// binomial(J, m) edge columns in lexicographic edge order.
struct MultiOrderLayout {
  std::size_t joints = 0;
  std::vector<std::size_t> orders;
  std::vector<HyperEdgeIndex> edges;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;

  std::size_t r() const { return orders.size(); }
  // Throws std::invalid_argument for an empty, unsorted or repeated order list or an order > J.
  static MultiOrderLayout make(std::size_t joints, std::vector<std::size_t> orders);
  // Orders 1..r.
  static MultiOrderLayout full(std::size_t joints, std::size_t r);
};

// phi[k][t] is the (J^m, d') output of order layout.orders[k] for block t. Keeps the entries at
// strictly increasing index tuples and returns M of shape (d', N, tau).
ad::Var assemble_multi_order(const std::vector<std::vector<ad::Var>>& phi,
                             const MultiOrderLayout& layout);
Tensor assemble_multi_order(const std::vector<std::vector<Tensor>>& phi,
                            const MultiOrderLayout& layout);

// Attention matrices by token name, filled during a traced forward.
using AttentionTrace = std::map<std::string, Tensor>;

struct AttentionResult {
  ad::Var out;      // same shape as the input tokens
  ad::Var weights;  // (tokens, tokens), rows sum to one
};

// Rows of m are tokens. softmax(Q K^T / sqrt(width)) V with Q = W^q m, K = W^k m, V = W^v m.
AttentionResult coupled_mode_attention(ad::Var m, ad::Var wq, ad::Var wk, ad::Var wv);

// prefix.wq, prefix.wk: N(0, 1/width); prefix.wv: identity plus N(0, 0.01^2) noise.
void init_coupled_attention(ParamSet& params, const std::string& prefix, std::size_t tokens,
                            std::mt19937_64& rng);

// Multi-order pooling. Attention over the rows of x (d'' x N), then per order the order-m span
// times prefix.h<m> (N_Em x J), stacked as (r d'', J) with order-major rows.
void init_mp(ParamSet& params, const std::string& prefix, std::size_t d2,
             const MultiOrderLayout& layout, std::mt19937_64& rng);
ad::Var mp_forward(Binding& bind, const std::string& prefix, const MultiOrderLayout& layout,
                   ad::Var x, AttentionTrace* trace = nullptr, const std::string& token = "mp");

// Normalized incidence: column j averages the order-m edges containing j.
Tensor incidence_pooling_init(const HyperEdgeIndex& index);

// Temporal-block pooling: attention over the rows of x (d''' x tau) then a reduction over tau.
void init_tp(ParamSet& params, const std::string& prefix, std::size_t d3, PoolMethod method,
             std::mt19937_64& rng);
ad::Var tp_attention(Binding& bind, const std::string& prefix, ad::Var x,
                     AttentionTrace* trace = nullptr, const std::string& token = "tp");
// o: (d''', tau) -> (d'''). attn uses prefix.pool_w, tri uses prefix.pool_u and prefix.pool_v.
ad::Var temporal_pool(Binding& bind, const std::string& prefix, PoolMethod method, ad::Var o);

// rho(t) = 2 (tau - t + 1) - (tau + 1) (H_tau - H_{t-1}) for t = 1..tau.
std::vector<double> rank_pool_coefficients(std::size_t tau);

// (r * d' tau, J) with rows (order, channel, block) -> (r * d' * J, tau) with rows
// (order, channel, joint).
ad::Var restack_mp_output(ad::Var o, std::size_t r, std::size_t d_prime, std::size_t tau,
                          std::size_t joints);

struct HeadSpec {
  Variant variant = Variant::two_branch;
  PoolMethod pool = PoolMethod::rank;
  std::size_t d_prime = 4;
  std::size_t tau = 1;
  std::size_t num_classes = 2;
  MultiOrderLayout layout;

  // r d' J, the width of either branch output.
  std::size_t branch_width() const { return layout.r() * d_prime * layout.joints; }
  std::size_t classifier_width() const;
};

// Registers the parameters the variant uses, plus the classifier prefix "cls".
void init_head(ParamSet& params, const HeadSpec& spec, std::mt19937_64& rng);

// m: (d', N, tau). Both branches return a vector of width r d' J.
ad::Var branch_mp_tp(Binding& bind, const HeadSpec& spec, ad::Var m,
                     AttentionTrace* trace = nullptr);
ad::Var branch_tp_mp(Binding& bind, const HeadSpec& spec, ad::Var m,
                     AttentionTrace* trace = nullptr);
// Features fed to the classifier for spec.variant.
ad::Var head_features(Binding& bind, const HeadSpec& spec, ad::Var m,
                      AttentionTrace* trace = nullptr);
// Logits of width num_classes.
ad::Var head_forward(Binding& bind, const HeadSpec& spec, ad::Var m,
                     AttentionTrace* trace = nullptr);

}  // namespace mmf
