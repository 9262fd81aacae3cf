// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_NUMCORE_ADAM_HPP_
#define REPLAYGATE_NUMCORE_ADAM_HPP_

#include <cstdint>
#include <span>

#include "replaygate/numcore/tape.hpp"

namespace replaygate::nc {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Frozen params keep their values bit-for-bit; every
/// param's gradient is zeroed after the step.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<Param* const> params);
  std::uint64_t steps_taken() const noexcept { return t_; }
  AdamConfig& config() noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

/// Global L2 norm of the gradients of the non-frozen params.
double grad_norm(std::span<Param* const> params);
/// Rescales non-frozen gradients so their global norm is at most `max_norm`.
/// Returns the norm measured before clipping.
double clip_grad_norm(std::span<Param* const> params, double max_norm);

}  // namespace replaygate::nc

#endif  // REPLAYGATE_NUMCORE_ADAM_HPP_
