#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mmformer/model.hpp"

namespace mmf {

struct TrainConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 60;
  std::vector<std::size_t> lr_drops = {40, 50};
  std::uint64_t seed = 0;

  std::size_t T = 10, S = 5;
  std::size_t joints = 0;  // 0: taken from the data
  std::size_t r = 3;
  std::vector<std::size_t> orders;  // empty: 1..r
  std::size_t d = 16, d_prime = 16, depth = 2, heads = 4, d_head = 0, d_ff = 0, d_k = 64;
  AttentionMode attention = AttentionMode::automatic;
  PoolMethod pool = PoolMethod::rank;
  Variant variant = Variant::two_branch;
  std::size_t torso_index = 0;
  double dropout = 0.0;
  // Per-class train/test split used by ablate and --subset; 0 keeps two thirds for training.
  std::size_t train_per_class = 0;

  void validate() const;
  std::vector<std::size_t> effective_orders() const;
};

// Throws std::invalid_argument for an unknown key or a malformed value.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
// Flat key=value lines; blank lines and lines starting with '#' are ignored. Errors name the
// 1-based line.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::string& path);
// Every key, one per line, in a fixed order; parse_config(format_config(c)) == c.
std::string format_config(const TrainConfig& cfg);

// Architecture for `data`: joints, coordinates and class count come from the data, tau from the
// longest sequence.
ModelConfig model_config(const TrainConfig& cfg, const Dataset& data);

// lr0 * 10^-(number of drop epochs <= epoch). Epochs count from 1.
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct SgdState {
  std::vector<Tensor> velocity;
};

// v <- momentum v + (g + weight_decay p); p <- p - lr v, for trainable parameters only.
void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, SgdState& state, double lr,
              double momentum, double weight_decay);

struct Metrics {
  double top1 = 0.0, top5 = 0.0, loss = 0.0;
  std::size_t count = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0, loss = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Minibatch SGD over `data` with seeded shuffling and dropout; deterministic for a fixed seed
// whatever the thread count. Throws on an empty dataset.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});
// Same, for a model built elsewhere and already prepared sequences.
std::vector<EpochStats> train_model(Model& model, const std::vector<PreparedSequence>& data,
                                    const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Position of `label` when classes are sorted by decreasing logit, ties broken by class index.
std::size_t label_rank(const Tensor& logits, std::size_t label);
Metrics evaluate(const Model& model, const Dataset& data);
Metrics evaluate_prepared(const Model& model, const std::vector<PreparedSequence>& data);

// Per class, the first train_per_class sequences train and the rest test.
void split_dataset(const Dataset& data, const TrainConfig& cfg, Dataset& train, Dataset& test);

// Binary checkpoint: magic, model configuration as key=value text, then named tensors.
void write_checkpoint(std::ostream& out, const Model& model);
Model read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

// Post-softmax attention matrix of one token type for one sequence. Throws std::invalid_argument
// when the variant has no such token.
Tensor attention_matrix(const Model& model, const SkeletonSequence& seq, const std::string& token);
// Writes prefix.csv (full precision) and prefix.pgm (8-bit, linear min-max scaling).
Tensor export_attention(const Model& model, const SkeletonSequence& seq, const std::string& token,
                        const std::string& prefix);
void write_matrix_csv(std::ostream& out, const Tensor& m);
void write_pgm(std::ostream& out, const Tensor& m);

struct AblationRow {
  Variant variant = Variant::baseline;
  PoolMethod pool = PoolMethod::avg;
  std::uint64_t seed = 0;
  Metrics test;
  double train_loss = 0.0;
};

// Every variant x pool x seed (seeds cfg.seed, cfg.seed + 1, ...), trained on the train split and
// scored on the test split.
std::vector<AblationRow> ablate(const Dataset& data, const TrainConfig& cfg, std::size_t seeds,
                                const std::vector<PoolMethod>& pools,
                                const std::function<void(const AblationRow&)>& on_row = {});
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace mmf
