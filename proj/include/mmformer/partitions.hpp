#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mmf {

// A set partition of {0..k-1} as a restricted-growth string: rgs[0] == 0 and
// rgs[q] <= 1 + max(rgs[0..q)). Block ids are numbered by first appearance.
using Partition = std::vector<std::uint8_t>;

// All partitions of {0..k-1} for 1 <= k <= 6, restricted-growth strings in lexicographic order.
std::vector<Partition> enumerate_partitions(std::size_t k);
std::size_t bell_number(std::size_t k);
std::size_t block_count(const Partition& p);

// Index tables over joint tuples for the partitions of m input + n output positions
// (inputs first). A partition pi selects the pairs (i, j) of an input tuple i in [J]^m and an
// output tuple j in [J]^n whose positions agree within every block of pi. Positions in
// different blocks are unconstrained.
//
// Blocks touching both sides are "mixed"; their shared joint values form the key that links
// an input tuple to the output tuples it reaches. Tuples are flattened row-major.
class PartitionIndex {
 public:
  // Input-side tables are shared between partitions that agree on the input positions and on
  // which input blocks are mixed.
  struct InputSignature {
    std::vector<std::int32_t> in_key;  // per input tuple; -1 when its ties are violated
    std::size_t key_count = 0;         // J^(mixed blocks)
    std::size_t multiplicity = 0;      // valid input tuples per key, J^(input-only blocks)
    std::vector<std::uint32_t> group_offsets;  // CSR of valid input tuples grouped by key
    std::vector<std::uint32_t> group_items;
  };

  PartitionIndex(std::size_t joints, std::size_t m, std::size_t n);

  // Process-wide cache; thread-safe, entries live for the whole program.
  static const PartitionIndex& get(std::size_t joints, std::size_t m, std::size_t n);

  std::size_t joints() const noexcept { return joints_; }
  std::size_t in_order() const noexcept { return m_; }
  std::size_t out_order() const noexcept { return n_; }
  std::size_t in_size() const noexcept { return in_size_; }
  std::size_t out_size() const noexcept { return out_size_; }

  std::size_t count() const noexcept { return partitions_.size(); }
  const Partition& partition(std::size_t p) const { return partitions_[p]; }
  std::size_t signature_count() const noexcept { return signatures_.size(); }
  const InputSignature& signature(std::size_t s) const { return signatures_[s]; }
  std::size_t signature_of(std::size_t p) const { return signature_of_[p]; }
  const InputSignature& input(std::size_t p) const { return signatures_[signature_of_[p]]; }

  // Output tuples satisfying the output ties of partition p, with their keys.
  std::span<const std::uint32_t> out_rows(std::size_t p) const { return out_rows_[out_group_of_[p]]; }
  std::span<const std::uint32_t> out_keys(std::size_t p) const { return out_keys_[out_group_of_[p]]; }

  // Partitions with identical (out_rows, out_keys) tables form one output group, so a layer can
  // sum their keyed results before a single scatter.
  std::size_t out_group_count() const noexcept { return out_members_.size(); }
  std::size_t out_group_of(std::size_t p) const { return out_group_of_[p]; }
  std::span<const std::size_t> out_group_members(std::size_t g) const { return out_members_[g]; }
  std::span<const std::uint32_t> group_rows(std::size_t g) const { return out_rows_[g]; }
  std::span<const std::uint32_t> group_keys(std::size_t g) const { return out_keys_[g]; }

  // Output tuples satisfying partition rho of the n output positions alone (bias patterns).
  std::size_t bias_count() const noexcept { return bias_rows_.size(); }
  std::span<const std::uint32_t> bias_rows(std::size_t rho) const { return bias_rows_[rho]; }

 private:
  std::size_t joints_, m_, n_, in_size_, out_size_;
  std::vector<Partition> partitions_;
  std::vector<InputSignature> signatures_;
  std::vector<std::size_t> signature_of_;
  std::vector<std::size_t> out_group_of_;
  std::vector<std::vector<std::size_t>> out_members_;
  std::vector<std::vector<std::uint32_t>> out_rows_, out_keys_;  // per output group
  std::vector<std::vector<std::uint32_t>> bias_rows_;
};

std::size_t int_pow(std::size_t base, std::size_t exp);

}  // namespace mmf
