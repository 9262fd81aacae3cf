// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_NUMCORE_NN_HPP_
#define REPLAYGATE_NUMCORE_NN_HPP_

#include <map>
#include <string>
#include <vector>

#include "replaygate/numcore/ops.hpp"
#include "replaygate/numcore/rng.hpp"
#include "replaygate/numcore/tape.hpp"

namespace replaygate::nc {

/// Named parameters with stable addresses, iterated in name order.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor value, bool frozen = false);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  /// Params whose name starts with `prefix`.
  std::vector<Param*> with_prefix(const std::string& prefix);
  void set_frozen(const std::string& prefix, bool frozen);
  void zero_grad();
  std::size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Param> params_;
};

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor scaled_uniform(std::size_t rows, std::size_t cols, Rng& rng);
/// Square orthogonal matrix from the QR factorization of a Gaussian draw.
Tensor orthogonal(std::size_t n, Rng& rng);

/// Gated recurrent unit with gate blocks stacked as [reset; update; candidate].
struct GruWeights {
  Param* w_in = nullptr;   // [3H, D]
  Param* w_rec = nullptr;  // [3H, H]
  Param* b_in = nullptr;   // [3H]
  Param* b_rec = nullptr;  // [3H]

  std::size_t hidden() const { return w_rec->value.shape()[1]; }
  std::size_t input() const { return w_in->value.shape()[1]; }
};

/// Registers GRU params under `prefix` with orthogonal recurrent blocks.
GruWeights make_gru(ParamStore& store, const std::string& prefix, std::size_t input,
                    std::size_t hidden, Rng& rng);

/// r = sig(Wr x + Ur h), z = sig(Wz x + Uz h), n = tanh(Wn x + r*(Un h)),
/// h' = (1 - z) * n + z * h (biases folded into each affine term).
Var gru_cell(Var x, Var h, const GruWeights& w);

}  // namespace replaygate::nc

#endif  // REPLAYGATE_NUMCORE_NN_HPP_
