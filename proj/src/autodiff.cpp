#include "mmformer/autodiff.hpp"

#include <stdexcept>

namespace mmf::ad {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var: detached handle");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ != nullptr && tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad;
  return push(std::move(node));
}

Var Tape::leaf_ref(const Tensor& value, bool requires_grad) {
  Node node;
  node.external = &value;
  node.requires_grad = requires_grad;
  return push(std::move(node));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  Node node;
  node.owned = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape() != this) throw std::logic_error("Tape::record: input from a different tape");
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

const Tensor& Tape::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.external != nullptr ? *n.external : n.owned;
}

Tensor& Tape::grad_buffer(NodeId id) {
  Node& n = nodes_.at(id);
  if (n.grad.shape() != value(id).shape() || n.grad.size() != value(id).size()) {
    n.grad = Tensor(value(id).shape(), 0.0);
  }
  return n.grad;
}

const Tensor& Tape::grad_of(NodeId id) { return grad_buffer(id); }

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.tape() != this) {
    throw std::logic_error("backward: loss is not recorded on this tape");
  }
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, id);
  }
}

Tensor Tape::grad(Var v) {
  if (v.tape() != this) throw std::logic_error("Tape::grad: foreign variable");
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty() && value(v.id()).size() != 0) return Tensor(value(v.id()).shape(), 0.0);
  return n.grad;
}

void Tape::clear() { nodes_.clear(); }

}  // namespace mmf::ad
