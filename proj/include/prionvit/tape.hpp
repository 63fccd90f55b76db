#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "prionvit/tensor.hpp"

namespace prionvit {

class Tape;

// Handle to a tensor recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive and has not been reset.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Gradients of a scalar loss with respect to every requires_grad leaf.
class Gradients {
 public:
  // Leaves the loss does not depend on get zeros of their own shape.
  const Tensor& operator[](Var leaf) const;
  bool contains(Var leaf) const { return grads_.count(leaf.id()) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

// Linear record of executed differentiable operations. Single owner; one
// backward pass per recording, after which reset() must be called before
// recording again.
class Tape {
 public:
  // Accumulates into each non-null grad_in entry (null means that input does
  // not need a gradient).
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A leaf participates in differentiation iff value.requires_grad().
  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const;

  Gradients backward(Var loss);
  void reset();

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // With gradients disabled ops still compute values but keep no closures;
  // useful for inference.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    bool is_leaf = false;
  };

  void check_open() const;
  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
  bool grad_enabled_ = true;
};

}  // namespace prionvit
