#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mmformer/tensor.hpp"

namespace mmf {

// One recorded action. Each subject is an (F, J, C) tensor, C = 2 or 3; a second subject must
// have the same extents.
struct SkeletonSequence {
  std::vector<Tensor> subjects;
  std::size_t label = 0;

  std::size_t frames() const { return subjects.at(0).dim(0); }
  std::size_t joints() const { return subjects.at(0).dim(1); }
  std::size_t coords() const { return subjects.at(0).dim(2); }
};

using Dataset = std::vector<SkeletonSequence>;

// Throws std::invalid_argument unless F >= 1, J >= 2, C in {2, 3}, all subjects agree and every
// coordinate is finite.
void validate(const SkeletonSequence& seq);

// Subtracts the torso joint of each frame from every joint of that frame. frames: (F, J, C).
Tensor center_on_torso(const Tensor& frames, std::size_t torso);
// Divides each axis by its max-abs over all frames and joints; an all-zero axis stays zero.
Tensor normalize_unit_range(const Tensor& frames);
// Both steps on every subject separately.
SkeletonSequence normalize_sequence(const SkeletonSequence& seq, std::size_t torso);

// Number of blocks of length T at stride S: floor((F - T) / S) + 1, or 1 when F < T.
std::size_t block_count(std::size_t frames, std::size_t T, std::size_t S);

struct BlockedSequence {
  // (tau * J, C * T): row t * J + j holds joint j of block t flattened frame-major
  // (f1 x, f1 y, f1 z, f2 x, ...).
  Tensor blocks;
  std::size_t tau = 0, joints = 0, T = 0, S = 0;
};

// Block t covers frames [t S, t S + T); trailing frames that do not fill a block are dropped and
// sequences shorter than T are padded by cyclic repetition.
BlockedSequence split_blocks(const Tensor& frames, std::size_t T, std::size_t S);

// One JSON object per line: {"label": int, "joints": F x J x C, "subjects": optional second
// skeleton}. Blank lines are skipped. Errors name the 1-based line number.
Dataset read_jsonl(std::istream& in);
void write_jsonl(std::ostream& out, const Dataset& data);
Dataset load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const Dataset& data);

struct SynthConfig {
  std::size_t num_classes = 4;
  std::size_t per_class = 150;
  std::size_t joints = 10;
  std::size_t frames = 40;
  std::uint64_t seed = 0;
  // assignment[c] is the parity pattern used by class c; empty means the identity.
  std::vector<std::size_t> assignment;
  double noise = 0.02;
};

// Joint 0 is a static torso. Every other joint moves along a fixed per-joint direction with a
// slow quarter-period sine ramp whose sign (phase 0 or pi) is drawn per sequence, plus a small fast wobble
// and noise. Class c is encoded by the sign products of ceil(log2 K) disjoint joint triples
// (1,2,3), (4,5,6), ...: bit k of the class pattern fixes the product of triple k. Within a class
// every joint sign and every pair of signs is balanced, so only triple products carry the label.
// Sequences are ordered class by class. Requires K >= 2, J >= 6 and J - 1 >= 3 ceil(log2 K).
Dataset synth_dataset(const SynthConfig& cfg);

// Joint indices of the triples carrying the class bits.
std::vector<std::vector<std::size_t>> synth_coupled_triples(std::size_t num_classes);

// Per class, the first `train_per_class` sequences (in dataset order) go to train, the rest to
// test.
void split_per_class(const Dataset& data, std::size_t train_per_class, Dataset& train,
                     Dataset& test);

}  // namespace mmf
