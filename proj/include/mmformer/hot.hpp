#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "mmformer/equivariant.hpp"
#include "mmformer/params.hpp"

namespace mmf {

// Positive random features psi(x)_a = exp(omega_a . x - |x|^2 / 2) / sqrt(d_K), applied to every
// width-d_h group of columns. x: (rows, G * d_h); omega: (d_K, d_h). Returns (rows, G * d_K).
ad::Var performer_features(ad::Var x, ad::Var omega);

// Attention over the equivalence classes of joint-index pairs. Column group g = class * heads +
// head of Q (J^n rows) and K (J^m rows) holds width d_h; group g of V (J^m rows) holds width d_v.
// Classes are the partitions of PartitionIndex(J, m, n). The output (J^n, d_v) sums over classes,
// heads and the inputs in each class support. `active` (empty = all) restricts the classes.
struct ClassAttentionShape {
  std::size_t joints = 0, m = 1, n = 1, heads = 1;
  std::vector<bool> active;
};

// exp(q . k) normalised over each class support.
ad::Var class_attention_exact(ad::Var q, ad::Var k, ad::Var v, const ClassAttentionShape& shape);
// The same normalisation with the kernel replaced by phi_q . phi_k (already featurised inputs).
ad::Var class_attention_linear(ad::Var phi_q, ad::Var phi_k, ad::Var v,
                               const ClassAttentionShape& shape);

// Dense coefficients alpha[i][j] (J^m x J^n) of one class and head in exact mode.
Tensor attention_coefficients(const Tensor& q, const Tensor& k, const ClassAttentionShape& shape,
                              std::size_t cls, std::size_t head);

enum class AttentionMode { exact, performer, automatic };

struct HotLayerSpec {
  std::size_t m = 1, n = 1;
  std::size_t d = 16;       // input and output width
  std::size_t heads = 4;
  std::size_t d_head = 4;
  std::size_t d_ff = 16;
  std::size_t d_k = 64;     // random features in performer mode
  AttentionMode mode = AttentionMode::automatic;
  Aggregation agg = Aggregation::mean;
  std::vector<bool> active_classes;

  std::size_t classes() const { return bell_number(m + n); }
  // exact when m == 1 or J <= 8 under automatic mode.
  bool use_exact(std::size_t joints) const;
};

void init_hot_layer(ParamSet& params, const std::string& prefix, const HotLayerSpec& spec,
                    std::mt19937_64& rng);

// Attention part alone, (J^m, d) -> (J^n, d).
ad::Var hot_attention(Binding& bind, const std::string& prefix, const HotLayerSpec& spec,
                      ad::Var x, std::size_t joints);

// attention + L2(ReLU(L1(attention))), (J^m, d) -> (J^n, d).
ad::Var hot_layer(Binding& bind, const std::string& prefix, const HotLayerSpec& spec, ad::Var x,
                  std::size_t joints);

// Dropout source shared by the stochastic layers; a null rng disables dropout.
struct DropoutSource {
  std::mt19937_64* rng = nullptr;
  double rate = 0.0;
};

Tensor dropout_mask(const Shape& shape, double rate, std::mt19937_64& rng);

// Per-joint three-layer MLP C*T -> 2CT -> 3CT -> d with ReLU after the first two layers and
// dropout before the last. x: (rows, C*T) with any number of joint rows.
struct MlpUnitSpec {
  std::size_t in = 30;
  std::size_t d = 16;
};

void init_mlp_unit(ParamSet& params, const std::string& prefix, const MlpUnitSpec& spec,
                   std::mt19937_64& rng);
ad::Var mlp_unit(Binding& bind, const std::string& prefix, const MlpUnitSpec& spec, ad::Var x,
                 const DropoutSource& dropout);

// One branch of order m: a 1 -> m layer followed by depth - 1 layers m -> m, then a per-entry
// projection d -> d_out when the widths differ.
struct HotBranchSpec {
  std::size_t m = 1;
  std::size_t depth = 2;
  std::size_t d = 16;
  std::size_t d_out = 16;
  std::size_t heads = 4;
  std::size_t d_head = 4;
  std::size_t d_ff = 16;
  std::size_t d_k = 64;
  AttentionMode mode = AttentionMode::automatic;

  HotLayerSpec layer(std::size_t index) const;
};

void init_hot_branch(ParamSet& params, const std::string& prefix, const HotBranchSpec& spec,
                     std::mt19937_64& rng);
// One temporal block (J, d) -> (J^m, d_out).
ad::Var hot_branch_block(Binding& bind, const std::string& prefix, const HotBranchSpec& spec,
                         ad::Var block, std::size_t joints);
// Blocks stacked as (tau * J, d) -> one (J^m, d_out) output per block.
std::vector<ad::Var> hot_branch(Binding& bind, const std::string& prefix,
                                const HotBranchSpec& spec, ad::Var blocks, std::size_t joints);

// Affine map x (rows, in) W (in, out) + b, registered as prefix.w / prefix.b.
void init_affine(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                 std::mt19937_64& rng);
ad::Var affine(Binding& bind, const std::string& prefix, ad::Var x);

}  // namespace mmf
