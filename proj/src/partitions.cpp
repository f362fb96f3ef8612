#include "mmformer/partitions.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>

namespace mmf {

namespace {

void extend(Partition& prefix, std::size_t k, std::uint8_t next_block,
            std::vector<Partition>& out) {
  if (prefix.size() == k) {
    out.push_back(prefix);
    return;
  }
  for (std::uint8_t b = 0; b <= next_block; ++b) {
    prefix.push_back(b);
    extend(prefix, k, b == next_block ? static_cast<std::uint8_t>(next_block + 1) : next_block,
           out);
    prefix.pop_back();
  }
}

// Row-major digits of a flattened tuple, most significant first.
void decode(std::size_t flat, std::size_t base, std::span<std::size_t> digits) {
  for (std::size_t q = digits.size(); q-- > 0;) {
    digits[q] = flat % base;
    flat /= base;
  }
}

// True when positions sharing a block carry equal digits. `first` records the digit seen first
// for each block.
bool ties_hold(std::span<const std::uint8_t> blocks, std::span<const std::size_t> digits,
               std::vector<std::ptrdiff_t>& first) {
  std::fill(first.begin(), first.end(), -1);
  for (std::size_t q = 0; q < blocks.size(); ++q) {
    std::ptrdiff_t& f = first[blocks[q]];
    const auto d = static_cast<std::ptrdiff_t>(digits[q]);
    if (f < 0) {
      f = d;
    } else if (f != d) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::size_t int_pow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

std::vector<Partition> enumerate_partitions(std::size_t k) {
  if (k < 1 || k > 6) {
    throw std::invalid_argument("enumerate_partitions: k must be in 1..6, got " +
                                std::to_string(k));
  }
  std::vector<Partition> out;
  Partition prefix{0};
  extend(prefix, k, 1, out);
  return out;
}

std::size_t bell_number(std::size_t k) {
  // Bell triangle.
  std::vector<std::size_t> row{1};
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::size_t> next{row.back()};
    for (std::size_t v : row) next.push_back(next.back() + v);
    row = std::move(next);
  }
  return row.front();
}

std::size_t block_count(const Partition& p) {
  return p.empty() ? 0 : static_cast<std::size_t>(*std::max_element(p.begin(), p.end())) + 1;
}

PartitionIndex::PartitionIndex(std::size_t joints, std::size_t m, std::size_t n)
    : joints_(joints), m_(m), n_(n) {
  if (m < 1 || n < 1 || m + n > 6) {
    throw std::invalid_argument("PartitionIndex: unsupported orders (" + std::to_string(m) + "," +
                                std::to_string(n) + ")");
  }
  if (joints < std::max(m, n)) {
    throw std::invalid_argument("PartitionIndex: need at least max(m, n) joints");
  }
  in_size_ = int_pow(joints, m);
  out_size_ = int_pow(joints, n);
  partitions_ = enumerate_partitions(m + n);

  std::vector<std::size_t> in_digits(m), out_digits(n);
  std::vector<std::ptrdiff_t> first;
  std::map<std::vector<std::uint8_t>, std::size_t> signature_ids;
  std::map<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>, std::size_t> groups;

  for (const Partition& p : partitions_) {
    const std::size_t blocks = block_count(p);
    first.assign(blocks, -1);
    std::vector<bool> has_in(blocks, false), has_out(blocks, false);
    for (std::size_t q = 0; q < m; ++q) has_in[p[q]] = true;
    for (std::size_t q = m; q < m + n; ++q) has_out[p[q]] = true;
    std::vector<std::size_t> mixed;
    std::size_t in_only = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
      if (has_in[b] && has_out[b]) mixed.push_back(b);
      if (has_in[b] && !has_out[b]) ++in_only;
    }

    std::vector<std::uint8_t> sig_key(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(m));
    for (std::size_t b = 0; b < blocks; ++b) {
      sig_key.push_back(static_cast<std::uint8_t>(has_in[b] && has_out[b]));
    }
    auto [it, inserted] = signature_ids.try_emplace(sig_key, signatures_.size());
    if (inserted) {
      InputSignature sig;
      sig.key_count = int_pow(joints, mixed.size());
      sig.multiplicity = int_pow(joints, in_only);
      sig.in_key.assign(in_size_, -1);
      std::vector<std::uint32_t> counts(sig.key_count, 0);
      const std::span<const std::uint8_t> in_blocks(p.data(), m);
      for (std::size_t i = 0; i < in_size_; ++i) {
        decode(i, joints, in_digits);
        if (!ties_hold(in_blocks, in_digits, first)) continue;
        std::size_t key = 0;
        for (std::size_t b : mixed) key = key * joints + static_cast<std::size_t>(first[b]);
        sig.in_key[i] = static_cast<std::int32_t>(key);
        ++counts[key];
      }
      sig.group_offsets.assign(sig.key_count + 1, 0);
      for (std::size_t k = 0; k < sig.key_count; ++k) {
        sig.group_offsets[k + 1] = sig.group_offsets[k] + counts[k];
      }
      sig.group_items.resize(sig.group_offsets.back());
      std::vector<std::uint32_t> cursor(sig.group_offsets.begin(), sig.group_offsets.end() - 1);
      for (std::size_t i = 0; i < in_size_; ++i) {
        if (sig.in_key[i] >= 0) sig.group_items[cursor[sig.in_key[i]]++] = static_cast<std::uint32_t>(i);
      }
      signatures_.push_back(std::move(sig));
    }
    signature_of_.push_back(it->second);

    std::vector<std::uint32_t> rows, keys;
    const std::span<const std::uint8_t> out_blocks(p.data() + m, n);
    for (std::size_t j = 0; j < out_size_; ++j) {
      decode(j, joints, out_digits);
      if (!ties_hold(out_blocks, out_digits, first)) continue;
      std::size_t key = 0;
      for (std::size_t b : mixed) key = key * joints + static_cast<std::size_t>(first[b]);
      rows.push_back(static_cast<std::uint32_t>(j));
      keys.push_back(static_cast<std::uint32_t>(key));
    }
    auto [g, fresh] = groups.try_emplace({rows, keys}, out_members_.size());
    if (fresh) {
      out_members_.emplace_back();
      out_rows_.push_back(std::move(rows));
      out_keys_.push_back(std::move(keys));
    }
    out_group_of_.push_back(g->second);
    out_members_[g->second].push_back(out_group_of_.size() - 1);
  }

  for (const Partition& rho : enumerate_partitions(n)) {
    first.assign(block_count(rho), -1);
    std::vector<std::uint32_t> rows;
    for (std::size_t j = 0; j < out_size_; ++j) {
      decode(j, joints, out_digits);
      if (ties_hold(rho, out_digits, first)) rows.push_back(static_cast<std::uint32_t>(j));
    }
    bias_rows_.push_back(std::move(rows));
  }
}

const PartitionIndex& PartitionIndex::get(std::size_t joints, std::size_t m, std::size_t n) {
  static std::mutex mutex;
  static std::map<std::tuple<std::size_t, std::size_t, std::size_t>,
                  std::unique_ptr<PartitionIndex>>
      cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{joints, m, n}];
  if (!slot) slot = std::make_unique<PartitionIndex>(joints, m, n);
  return *slot;
}

}  // namespace mmf
