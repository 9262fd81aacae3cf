// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_NUMCORE_OPS_HPP_
#define REPLAYGATE_NUMCORE_OPS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "replaygate/numcore/tape.hpp"

/// Differentiable primitives. Every op checks shapes, computes its value
/// eagerly, and registers a gradient rule when any input requires gradient.
/// Rank-1 tensors act as a single row wherever an op works along the last axis.
namespace replaygate::nc {

inline constexpr double kProbFloor = 1e-12;

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
/// 1 - a, used by gate blends.
Var one_minus(Var a);

/// [m,k] x [k,n]; a rank-1 left operand yields a rank-1 result.
Var matmul(Var a, Var b);
/// x W^T + bias for x of shape [k] or [B,k] and W of shape [n,k].
Var linear(Var x, Var weight, Var bias);
Var linear(Var x, Var weight);

Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
Var exp(Var x);
/// log(max(x, floor)); the gradient is zero where the floor is active.
Var log(Var x, double floor = kProbFloor);
Var abs(Var x);
Var square(Var x);
Var clamp(Var x, double lo, double hi);
Var minimum(Var a, Var b);

Var softmax(Var x);
Var log_softmax(Var x);

Var sum(Var x);
Var mean(Var x);
/// Row sums over the last axis: [B,n] -> [B], [n] -> scalar.
Var sum_last(Var x);

Var concat(std::span<const Var> parts);
/// Columns [begin, begin+len) of the last axis.
Var slice(Var x, std::size_t begin, std::size_t len);
/// out[i] = x.flat[index[i]], reshaped to `shape`; gradient scatters back.
Var gather(Var x, std::vector<std::uint32_t> index, Shape shape);
/// Scalar element i of a flat tensor.
Var pick(Var x, std::size_t i);
Var reshape(Var x, Shape shape);

/// -sum_s target(s) * log(max(pred(s), 1e-12)).
/// Throws ContractError if `target` is not a probability distribution.
Var cross_entropy(const Tensor& target, Var pred);
/// sum_i |a_i - b_i|.
Var l1(Var a, Var b);

}  // namespace replaygate::nc

#endif  // REPLAYGATE_NUMCORE_OPS_HPP_
