// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/numcore/nn.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "replaygate/errors.hpp"

namespace replaygate::nc {

Param& ParamStore::add(const std::string& name, Tensor value, bool frozen) {
  auto [it, inserted] = params_.try_emplace(name, name, std::move(value), frozen);
  if (!inserted) throw ContractError("duplicate parameter name: " + name);
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  for (auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  for (const auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<Param*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Param*> out;
  for (auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) == 0) out.push_back(&p);
  }
  return out;
}

void ParamStore::set_frozen(const std::string& prefix, bool frozen) {
  for (Param* p : with_prefix(prefix)) p->frozen = frozen;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

Tensor scaled_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(Shape{rows, cols});
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

Tensor orthogonal(std::size_t n, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) g(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // Sign fix makes the draw uniform over the orthogonal group.
  const Eigen::MatrixXd rm = qr.matrixQR();
  for (std::size_t c = 0; c < n; ++c) {
    if (rm(c, c) < 0) q.col(c) *= -1.0;
  }
  Tensor t(Shape{n, n});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) t.at(r, c) = q(r, c);
  }
  return t;
}

GruWeights make_gru(ParamStore& store, const std::string& prefix, std::size_t input,
                    std::size_t hidden, Rng& rng) {
  Tensor w_in = scaled_uniform(3 * hidden, input, rng);
  Tensor w_rec(Shape{3 * hidden, hidden});
  for (std::size_t g = 0; g < 3; ++g) {
    Tensor block = orthogonal(hidden, rng);
    for (std::size_t r = 0; r < hidden; ++r) {
      for (std::size_t c = 0; c < hidden; ++c) w_rec.at(g * hidden + r, c) = block.at(r, c);
    }
  }
  GruWeights w;
  w.w_in = &store.add(prefix + ".w_in", std::move(w_in));
  w.w_rec = &store.add(prefix + ".w_rec", std::move(w_rec));
  w.b_in = &store.add(prefix + ".b_in", Tensor(Shape{3 * hidden}));
  w.b_rec = &store.add(prefix + ".b_rec", Tensor(Shape{3 * hidden}));
  return w;
}

Var gru_cell(Var x, Var h, const GruWeights& w) {
  const std::size_t hid = w.hidden();
  if (x.shape().last() != w.input() || h.shape().last() != hid) {
    throw DimensionError("gru_cell: input " + x.shape().str() + " / state " + h.shape().str() +
                         " do not match cell of input " + std::to_string(w.input()) +
                         " and hidden " + std::to_string(hid));
  }
  Tape& t = *x.tape;
  const Var gx = linear(x, t.param(*w.w_in), t.param(*w.b_in));
  const Var gh = linear(h, t.param(*w.w_rec), t.param(*w.b_rec));
  const Var r = sigmoid(add(slice(gx, 0, hid), slice(gh, 0, hid)));
  const Var z = sigmoid(add(slice(gx, hid, hid), slice(gh, hid, hid)));
  const Var n = tanh(add(slice(gx, 2 * hid, hid), mul(r, slice(gh, 2 * hid, hid))));
  return add(mul(one_minus(z), n), mul(z, h));
}

}  // namespace replaygate::nc
