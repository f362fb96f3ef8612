#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "mmformer/tensor.hpp"

namespace mmf::ad {

using NodeId = std::uint32_t;

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  NodeId id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t mode) const { return value().dim(mode); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the node list is already a
// topological order and backward() walks it in reverse. Confined to one thread.
class Tape {
 public:
  using Backward = std::function<void(Tape&, NodeId)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  // Leaf that refers to an external tensor without copying it; `value` must outlive the tape.
  Var leaf_ref(const Tensor& value, bool requires_grad = true);

  // Record an op result. The node requires a gradient if any input does; `backward` is
  // dropped otherwise.
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Tensor& value(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

  // Gradient flowing into node `id` during backward (zeros if nothing reached it).
  const Tensor& grad_of(NodeId id);
  // Accumulation buffer for an input gradient; allocated zero-filled on first use.
  Tensor& grad_buffer(NodeId id);

  // Populates gradients of every requires-grad node w.r.t. the scalar `loss`.
  void backward(Var loss);

  // Gradient of `v` after backward(); zeros when v did not influence the loss.
  Tensor grad(Var v);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

}  // namespace mmf::ad
