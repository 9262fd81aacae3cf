// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/numcore/adam.hpp"

#include <cmath>

namespace replaygate::nc {

void Adam::step(std::span<Param* const> params) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Param* p : params) {
    if (!p->frozen) {
      if (p->adam_m.size() != p->value.size()) p->adam_m = Tensor(p->value.shape());
      if (p->adam_v.size() != p->value.size()) p->adam_v = Tensor(p->value.shape());
      double* w = p->value.data();
      double* m = p->adam_m.data();
      double* v = p->adam_v.data();
      const double* g = p->grad.data();
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    p->zero_grad();
  }
}

double grad_norm(std::span<Param* const> params) {
  double s = 0.0;
  for (const Param* p : params) {
    if (p->frozen) continue;
    for (double g : p->grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(std::span<Param* const> params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (Param* p : params) {
      if (p->frozen) continue;
      for (double& g : p->grad.values()) g *= f;
    }
  }
  return norm;
}

}  // namespace replaygate::nc
