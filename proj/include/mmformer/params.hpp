#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmformer/autodiff.hpp"

namespace mmf {

// Named learnable tensors in insertion order. Addresses stay stable across insertions, so a
// tape may reference them without copying.
class ParamSet {
 public:
  // Non-trainable entries (fixed random projections) are bound without gradients and skipped by
  // the optimizer, but still checkpointed.
  Tensor& add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t k) const { return names_[k]; }
  Tensor& value(std::size_t k) { return *values_[k]; }
  const Tensor& value(std::size_t k) const { return *values_[k]; }
  bool trainable(std::size_t k) const { return trainable_[k]; }
  std::size_t index_of(const std::string& name) const;
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Tensor>> values_;
  std::vector<bool> trainable_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Lazily binds parameters of a ParamSet to leaves of one tape.
class Binding {
 public:
  Binding(ad::Tape& tape, const ParamSet& params, bool requires_grad)
      : tape_(tape), params_(params), requires_grad_(requires_grad) {}

  ad::Var operator()(const std::string& name);
  // Uses `v` for `name` instead of a leaf over the stored tensor (finite-difference checks).
  void bind_as(const std::string& name, ad::Var v);
  ad::Tape& tape() noexcept { return tape_; }
  bool training() const noexcept { return requires_grad_; }

  // Gradient per parameter (zeros for parameters the loss never touched), in ParamSet order.
  std::vector<Tensor> gradients();

 private:
  ad::Tape& tape_;
  const ParamSet& params_;
  bool requires_grad_;
  std::unordered_map<std::string, ad::Var> bound_;
};

}  // namespace mmf
