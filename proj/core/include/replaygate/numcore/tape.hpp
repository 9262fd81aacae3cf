// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_NUMCORE_TAPE_HPP_
#define REPLAYGATE_NUMCORE_TAPE_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <deque>
#include <vector>

#include "replaygate/numcore/tensor.hpp"

namespace replaygate::nc {

/// A trainable array with its gradient slot and Adam moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool frozen = false;

  Param() = default;
  Param(std::string n, Tensor v, bool is_frozen = false);

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

/// Reverse-mode gradient tape for one optimization window.
///
/// Ops append nodes in execution order; backward() walks them in exact reverse.
/// Params are recorded once per tape and accumulate directly into Param::grad.
/// Node values keep stable addresses for the lifetime of the tape.
/// Nodes whose inputs carry no gradient record no backward closure, so rollout
/// code can use the same ops without paying for gradient bookkeeping.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  /// With `frozen_params_constant`, frozen params enter the tape as constants:
  /// gradients still flow through them but are not accumulated into them.
  explicit Tape(bool frozen_params_constant) : frozen_params_constant_(frozen_params_constant) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A constant input; never receives gradient.
  Var constant(Tensor value);
  /// The node for `p` on this tape (created on first use). Value is referenced, not copied.
  Var param(Param& p);

  /// Appends a computed node. `fn` is dropped unless `needs_grad` is set.
  Var record(Tensor value, bool needs_grad, BackwardFn fn);

  const Tensor& value(std::uint32_t id) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }
  /// Gradient accumulator for node `id`, zero-allocated on first access.
  Tensor& grad(std::uint32_t id);
  bool has_grad(std::uint32_t id) const;

  /// Propagates d(loss)/d(node) to every reachable node. `loss` must be scalar.
  void backward(Var loss);
  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor own_grad;
    Param* param = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
    bool grad_live = false;
  };
  std::deque<Node> nodes_;
  std::unordered_map<Param*, std::uint32_t> param_nodes_;
  bool frozen_params_constant_ = false;
};

}  // namespace replaygate::nc

#endif  // REPLAYGATE_NUMCORE_TAPE_HPP_
