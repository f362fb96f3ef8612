#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mmformer/hot.hpp"
#include "mmformer/mmformer.hpp"
#include "mmformer/skeleton.hpp"

namespace mmf {

// Architecture of one classifier. Widths left at 0 take their defaults: d_head = d / heads,
// d_ff = d.
struct ModelConfig {
  std::size_t joints = 0;
  std::size_t coords = 3;
  std::size_t T = 10, S = 5;
  // Blocks per sequence seen by the head; sequences with another block count are resampled.
  std::size_t tau = 1;
  std::size_t num_classes = 2;
  std::vector<std::size_t> orders = {1, 2, 3};
  std::size_t d = 16, d_prime = 16, depth = 2, heads = 4, d_head = 0, d_ff = 0, d_k = 64;
  AttentionMode attention = AttentionMode::automatic;
  Variant variant = Variant::two_branch;
  PoolMethod pool = PoolMethod::rank;
  double dropout = 0.0;
  std::size_t torso = 0;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the first bad field.
  void validate() const;
  HotBranchSpec branch(std::size_t order) const;
  HeadSpec head() const;
};

// A normalized sequence cut into tau blocks: one (tau * J, C * T) tensor per subject.
struct PreparedSequence {
  std::vector<Tensor> blocks;
  std::size_t label = 0;
};

// Block indices used when a sequence has `have` blocks and the model expects `want`: evenly
// spaced, endpoints kept.
std::vector<std::size_t> resample_blocks(std::size_t have, std::size_t want);

class Model {
 public:
  // Fresh parameters drawn from config.seed.
  explicit Model(ModelConfig config);
  // Restores trained parameters; throws when names or shapes disagree with a fresh model.
  Model(ModelConfig config, const ParamSet& params);

  const ModelConfig& config() const noexcept { return config_; }
  const HeadSpec& head() const noexcept { return head_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

  // Validates, normalizes on the torso joint and splits into blocks.
  PreparedSequence prepare(const SkeletonSequence& seq) const;

  // The multi-order tensor (d', N, tau), averaged over subjects.
  ad::Var encode(Binding& bind, const PreparedSequence& seq, const DropoutSource& dropout) const;
  ad::Var forward(Binding& bind, const PreparedSequence& seq, const DropoutSource& dropout,
                  AttentionTrace* trace = nullptr) const;
  // Inference without gradients.
  Tensor logits(const PreparedSequence& seq, AttentionTrace* trace = nullptr) const;

 private:
  ModelConfig config_;
  HeadSpec head_;
  ParamSet params_;
};

}  // namespace mmf
