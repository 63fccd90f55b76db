#include "prionvit/tape.hpp"

#include <string>

namespace prionvit {

const Tensor& Var::value() const {
  if (!tape_) throw TapeError("use of an unbound Var");
  return tape_->value(*this);
}

const Tensor& Gradients::operator[](Var leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) {
    throw TapeError("no gradient recorded for node " + std::to_string(leaf.id()) +
                    " (not a requires_grad leaf)");
  }
  return it->second;
}

void Tape::check_open() const {
  if (consumed_) throw TapeError("tape already consumed by a backward pass; call reset()");
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw TapeError("Var does not belong to this tape");
}

Var Tape::leaf(Tensor value) {
  check_open();
  Node node;
  node.needs_grad = grad_enabled_ && value.requires_grad();
  node.is_leaf = true;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  check_open();
  Node node;
  node.value = std::move(value);
  if (grad_enabled_) {
    for (Var in : inputs) {
      check_owned(in);
      node.inputs.push_back(in.id_);
      node.needs_grad = node.needs_grad || nodes_[in.id_].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

bool Tape::needs_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].needs_grad;
}

Gradients Tape::backward(Var loss) {
  check_open();
  check_owned(loss);
  if (nodes_[loss.id_].value.numel() != 1) {
    throw TapeError("backward requires a scalar loss, got shape " + shape_str(nodes_[loss.id_].value.shape()));
  }
  consumed_ = true;

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id_] = Tensor(nodes_[loss.id_].value.shape(), 1.0);

  std::vector<Tensor*> grad_in;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.is_leaf || !node.backward || grads[id].empty()) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const std::size_t in = node.inputs[i];
      if (!nodes_[in].needs_grad) continue;
      if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      grad_in[i] = &grads[in];
    }
    node.backward(grads[id], grad_in);
    grads[id] = Tensor();
  }

  Gradients out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.is_leaf || !node.needs_grad) continue;
    if (grads[id].empty()) {
      out.grads_.emplace(id, Tensor(node.value.shape(), 0.0));
    } else {
      out.grads_.emplace(id, std::move(grads[id]));
    }
  }
  return out;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace prionvit
