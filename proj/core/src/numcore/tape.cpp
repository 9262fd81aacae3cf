// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/numcore/tape.hpp"

#include "replaygate/errors.hpp"

namespace replaygate::nc {

Param::Param(std::string n, Tensor v, bool is_frozen)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.shape()),
      adam_m(value.shape()),
      adam_v(value.shape()),
      frozen(is_frozen) {}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Param& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var{this, it->second};
  }
  if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
  Node n;
  n.param = &p;
  n.requires_grad = !(frozen_params_constant_ && p.frozen);
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Tape::record(Tensor value, bool needs_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs_grad;
  if (needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  n.grad_live = true;
  if (n.param) return n.param->grad;
  if (n.own_grad.shape() != n.value.shape() || n.own_grad.size() != n.value.size()) {
    n.own_grad = Tensor(n.value.shape());
  }
  return n.own_grad;
}

bool Tape::has_grad(std::uint32_t id) const { return nodes_[id].grad_live; }

void Tape::backward(Var loss) {
  if (nodes_.empty()) return;
  if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
  if (value(loss.id).size() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + value(loss.id).shape().str());
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id)[0] += 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.grad_live || !n.backward) continue;
    n.backward(*this, i);
  }
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

}  // namespace replaygate::nc
