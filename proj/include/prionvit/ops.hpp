#pragma once

// Differentiable tensor operations recorded on a Tape.
//
// Broadcasting is limited to the suffix rule: for binary ops either operand
// may have a shape equal to the trailing extents of the other (bias vectors,
// positional embeddings, a shared memory state against a batch).

#include <cstddef>

#include "prionvit/rng.hpp"
#include "prionvit/tape.hpp"
#include "prionvit/tensor.hpp"

namespace prionvit {

// a[..., m, k] x b[k, n] -> [..., m, n], or batched a[..., m, k] x b[..., k, n]
// with identical leading extents.
Var matmul(Var a, Var b);
// a[..., m, k] x b[..., n, k]^T -> [..., m, n], identical leading extents.
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_scalar(Var a, double s);
Var scale(Var a, double s);
// 1 - a
Var one_minus(Var a);

Var relu(Var x);
// Exact (erf) GELU.
Var gelu(Var x);
Var sigmoid(Var x);
Var softmax(Var x, std::size_t axis);
// Normalizes over the last axis; gamma and beta have the last extent of x.
Var layer_norm(Var x, Var gamma, Var beta, double eps);

// Reduces one axis, removing it (a rank-1 input reduces to shape {1}).
Var mean(Var x, std::size_t axis);
Var sum(Var x);
Var mean_all(Var x);
// [s...] -> [count, s...]
Var broadcast_batch(Var x, std::size_t count);
Var reshape(Var x, Shape shape);
// [a, b, c, d] -> [a, c, b, d]
Var swap_axes12(Var x);
// Inverted dropout: kept entries are scaled by 1/(1-rate). Identity when rate is 0.
Var dropout(Var x, double rate, Rng& rng);

// Scalar helpers and plain-tensor forms of the main ops.
double sigmoid(double x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor relu(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

}  // namespace prionvit
