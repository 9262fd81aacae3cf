// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/numcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "replaygate/errors.hpp"

namespace replaygate::nc {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

CMatMap as_mat(const Tensor& t) {
  return CMatMap(t.data(), static_cast<Eigen::Index>(t.shape().rows()),
                 static_cast<Eigen::Index>(t.shape().last()));
}
MatMap as_mat(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.shape().rows()),
                static_cast<Eigen::Index>(t.shape().last()));
}
CVecMap as_vec(const Tensor& t) { return CVecMap(t.data(), static_cast<Eigen::Index>(t.size())); }
VecMap as_vec(Tensor& t) { return VecMap(t.data(), static_cast<Eigen::Index>(t.size())); }

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(op) + ": operands are not on the same tape");
  }
  return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

template <typename F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  const double* src = x.data();
  double* dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(src[i]);
  return out;
}

// Elementwise unary op whose derivative is expressed via input x and output y.
template <typename F, typename D>
Var unary(Var x, F f, D dfdx) {
  Tape& t = *x.tape;
  Tensor out = map_values(t.value(x.id), f);
  const std::uint32_t xi = x.id;
  return t.record(std::move(out), t.requires_grad(xi), [xi, dfdx](Tape& tp, std::uint32_t self) {
    const Tensor& xv = tp.value(xi);
    const Tensor& yv = tp.value(self);
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Tensor& av = t.value(a.id);
  const Tensor& bv = t.value(b.id);
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  as_vec(out) = as_vec(av) + as_vec(bv);
  const auto ai = a.id, bi = b.id;
  const bool ng = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record(std::move(out), ng, [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) as_vec(tp.grad(ai)) += as_vec(g);
    if (tp.requires_grad(bi)) as_vec(tp.grad(bi)) += as_vec(g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  const Tensor& av = t.value(a.id);
  const Tensor& bv = t.value(b.id);
  require_same_shape(av, bv, "sub");
  Tensor out(av.shape());
  as_vec(out) = as_vec(av) - as_vec(bv);
  const auto ai = a.id, bi = b.id;
  const bool ng = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record(std::move(out), ng, [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) as_vec(tp.grad(ai)) += as_vec(g);
    if (tp.requires_grad(bi)) as_vec(tp.grad(bi)) -= as_vec(g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Tensor& av = t.value(a.id);
  const Tensor& bv = t.value(b.id);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  as_vec(out) = as_vec(av).cwiseProduct(as_vec(bv));
  const auto ai = a.id, bi = b.id;
  const bool ng = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record(std::move(out), ng, [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) as_vec(tp.grad(ai)) += as_vec(g).cwiseProduct(as_vec(tp.value(bi)));
    if (tp.requires_grad(bi)) as_vec(tp.grad(bi)) += as_vec(g).cwiseProduct(as_vec(tp.value(ai)));
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out(t.value(a.id).shape());
  as_vec(out) = as_vec(t.value(a.id)) * c;
  const auto ai = a.id;
  return t.record(std::move(out), t.requires_grad(ai), [ai, c](Tape& tp, std::uint32_t self) {
    as_vec(tp.grad(ai)) += as_vec(tp.grad(self)) * c;
  });
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out(t.value(a.id).shape());
  as_vec(out) = as_vec(t.value(a.id)).array() + c;
  const auto ai = a.id;
  return t.record(std::move(out), t.requires_grad(ai), [ai](Tape& tp, std::uint32_t self) {
    as_vec(tp.grad(ai)) += as_vec(tp.grad(self));
  });
}

Var one_minus(Var a) { return add_scalar(scale(a, -1.0), 1.0); }

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Tensor& av = t.value(a.id);
  const Tensor& bv = t.value(b.id);
  if (av.shape().rank() < 1 || av.shape().rank() > 2 || bv.shape().rank() != 2 ||
      av.shape().last() != bv.shape()[0]) {
    throw DimensionError("matmul: inner dimensions disagree: " + av.shape().str() + " x " +
                         bv.shape().str());
  }
  const std::size_t m = av.shape().rows();
  const std::size_t n = bv.shape()[1];
  Tensor out(av.shape().rank() == 1 ? Shape{n} : Shape{m, n});
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  const auto ai = a.id, bi = b.id;
  const bool ng = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record(std::move(out), ng, [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) {
      as_mat(tp.grad(ai)).noalias() += as_mat(g) * as_mat(tp.value(bi)).transpose();
    }
    if (tp.requires_grad(bi)) {
      as_mat(tp.grad(bi)).noalias() += as_mat(tp.value(ai)).transpose() * as_mat(g);
    }
  });
}

namespace {

Var linear_impl(Var x, Var w, const Var* b) {
  Tape& t = same_tape(x, w, "linear");
  const Tensor& xv = t.value(x.id);
  const Tensor& wv = t.value(w.id);
  if (xv.shape().rank() < 1 || xv.shape().rank() > 2 || wv.shape().rank() != 2 ||
      xv.shape().last() != wv.shape()[1]) {
    throw DimensionError("linear: input " + xv.shape().str() + " incompatible with weight " +
                         wv.shape().str());
  }
  const std::size_t n = wv.shape()[0];
  const std::size_t rows = xv.shape().rows();
  Tensor out(xv.shape().rank() == 1 ? Shape{n} : Shape{rows, n});
  auto om = as_mat(out);
  if (rows == 1) {
    as_vec(out).noalias() = as_mat(wv) * as_vec(xv);
  } else {
    om.noalias() = as_mat(xv) * as_mat(wv).transpose();
  }
  std::uint32_t bi = 0;
  bool has_bias = false;
  if (b != nullptr) {
    same_tape(x, *b, "linear");
    const Tensor& bv = t.value(b->id);
    if (bv.shape().rank() != 1 || bv.size() != n) {
      throw DimensionError("linear: bias " + bv.shape().str() + " does not match output width " +
                           std::to_string(n));
    }
    om.rowwise() += as_vec(bv).transpose();
    bi = b->id;
    has_bias = true;
  }
  const auto xi = x.id, wi = w.id;
  const bool ng =
      t.requires_grad(xi) || t.requires_grad(wi) || (has_bias && t.requires_grad(bi));
  return t.record(std::move(out), ng, [xi, wi, bi, has_bias, rows](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(xi)) {
      if (rows == 1) {
        as_vec(tp.grad(xi)).noalias() += as_mat(tp.value(wi)).transpose() * as_vec(g);
      } else {
        as_mat(tp.grad(xi)).noalias() += as_mat(g) * as_mat(tp.value(wi));
      }
    }
    if (tp.requires_grad(wi)) {
      if (rows == 1) {
        as_mat(tp.grad(wi)).noalias() += as_vec(g) * as_vec(tp.value(xi)).transpose();
      } else {
        as_mat(tp.grad(wi)).noalias() += as_mat(g).transpose() * as_mat(tp.value(xi));
      }
    }
    if (has_bias && tp.requires_grad(bi)) {
      as_vec(tp.grad(bi)) += as_mat(g).colwise().sum().transpose();
    }
  });
}

}  // namespace

Var linear(Var x, Var weight, Var bias) { return linear_impl(x, weight, &bias); }
Var linear(Var x, Var weight) { return linear_impl(x, weight, nullptr); }

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x, double floor) {
  return unary(
      x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Var abs(Var x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var square(Var x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Var minimum(Var a, Var b) {
  Tape& t = same_tape(a, b, "minimum");
  const Tensor& av = t.value(a.id);
  const Tensor& bv = t.value(b.id);
  require_same_shape(av, bv, "minimum");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::min(av[i], bv[i]);
  const auto ai = a.id, bi = b.id;
  const bool ng = t.requires_grad(ai) || t.requires_grad(bi);
  return t.record(std::move(out), ng, [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av2 = tp.value(ai);
    const Tensor& bv2 = tp.value(bi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      // Ties route the gradient to the first operand.
      const bool take_a = av2[i] <= bv2[i];
      if (take_a && tp.requires_grad(ai)) tp.grad(ai)[i] += g[i];
      if (!take_a && tp.requires_grad(bi)) tp.grad(bi)[i] += g[i];
    }
  });
}

Var softmax(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x.id);
  Tensor out(xv.shape());
  const std::size_t n = xv.shape().last();
  for (std::size_t r = 0; r < xv.shape().rows(); ++r) {
    const double* src = xv.data() + r * n;
    double* dst = out.data() + r * n;
    const double mx = *std::max_element(src, src + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (dst[i] = std::exp(src[i] - mx));
    for (std::size_t i = 0; i < n; ++i) dst[i] /= z;
  }
  const auto xi = x.id;
  return t.record(std::move(out), t.requires_grad(xi), [xi, n](Tape& tp, std::uint32_t self) {
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(xi);
    for (std::size_t r = 0; r < y.shape().rows(); ++r) {
      const double* yr = y.data() + r * n;
      const double* gr = g.data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += yr[i] * gr[i];
      for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += yr[i] * (gr[i] - dot);
    }
  });
}

Var log_softmax(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x.id);
  Tensor out(xv.shape());
  const std::size_t n = xv.shape().last();
  for (std::size_t r = 0; r < xv.shape().rows(); ++r) {
    const double* src = xv.data() + r * n;
    double* dst = out.data() + r * n;
    const double mx = *std::max_element(src, src + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(src[i] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] - lse;
  }
  const auto xi = x.id;
  return t.record(std::move(out), t.requires_grad(xi), [xi, n](Tape& tp, std::uint32_t self) {
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.grad(self);
    Tensor& gx = tp.grad(xi);
    for (std::size_t r = 0; r < y.shape().rows(); ++r) {
      double gs = 0.0;
      for (std::size_t i = 0; i < n; ++i) gs += g[r * n + i];
      for (std::size_t i = 0; i < n; ++i) {
        gx[r * n + i] += g[r * n + i] - std::exp(y[r * n + i]) * gs;
      }
    }
  });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  const double s = as_vec(t.value(x.id)).sum();
  const auto xi = x.id;
  return t.record(Tensor::scalar(s), t.requires_grad(xi), [xi](Tape& tp, std::uint32_t self) {
    as_vec(tp.grad(xi)).array() += tp.grad(self)[0];
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var sum_last(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x.id);
  const std::size_t rows = xv.shape().rows();
  Tensor out = xv.shape().rank() <= 1 ? Tensor(Shape{}) : Tensor(Shape{rows});
  as_vec(out) = as_mat(xv).rowwise().sum();
  const auto xi = x.id;
  return t.record(std::move(out), t.requires_grad(xi), [xi](Tape& tp, std::uint32_t self) {
    as_mat(tp.grad(xi)).colwise() += as_vec(tp.grad(self));
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat: no operands");
  Tape& t = *parts.front().tape;
  std::size_t total = 0;
  bool ng = false;
  for (const Var& p : parts) {
    if (p.tape != &t) throw ContractError("concat: operands are not on the same tape");
    if (t.value(p.id).shape().rank() != 1) {
      throw DimensionError("concat: expects rank-1 operands, got " + t.value(p.id).shape().str());
    }
    total += t.value(p.id).size();
    ng = ng || t.requires_grad(p.id);
  }
  Tensor out(Shape{total});
  std::vector<std::uint32_t> ids;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = t.value(p.id);
    std::copy(v.data(), v.data() + v.size(), out.data() + off);
    off += v.size();
    ids.push_back(p.id);
  }
  return t.record(std::move(out), ng, [ids = std::move(ids)](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t o = 0;
    for (auto id : ids) {
      const std::size_t n = tp.value(id).size();
      if (tp.requires_grad(id)) {
        Tensor& gi = tp.grad(id);
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[o + i];
      }
      o += n;
    }
  });
}

Var slice(Var x, std::size_t begin, std::size_t len) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x.id);
  const std::size_t n = xv.shape().last();
  if (xv.shape().rank() < 1 || begin + len > n) {
    throw DimensionError("slice: [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                         ") out of range for " + xv.shape().str());
  }
  const std::size_t rows = xv.shape().rows();
  Tensor out(xv.shape().rank() == 1 ? Shape{len} : Shape{rows, len});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(xv.data() + r * n + begin, xv.data() + r * n + begin + len, out.data() + r * len);
  }
  const auto xi = x.id;
  return t.record(std::move(out), t.requires_grad(xi),
                  [xi, begin, len, n, rows](Tape& tp, std::uint32_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& gx = tp.grad(xi);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t i = 0; i < len; ++i) gx[r * n + begin + i] += g[r * len + i];
                    }
                  });
}

Var gather(Var x, std::vector<std::uint32_t> index, Shape shape) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x.id);
  if (shape.numel() != index.size()) {
    throw DimensionError("gather: index count does not match output shape " + shape.str());
  }
  Tensor out(shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) throw DimensionError("gather: index out of range");
    out[i] = xv[index[i]];
  }
  const auto xi = x.id;
  return t.record(std::move(out), t.requires_grad(xi),
                  [xi, index = std::move(index)](Tape& tp, std::uint32_t self) {
                    const Tensor& g = tp.grad(self);
                    Tensor& gx = tp.grad(xi);
                    for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += g[i];
                  });
}

Var pick(Var x, std::size_t i) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x.id);
  if (i >= xv.size()) throw DimensionError("pick: index out of range for " + xv.shape().str());
  const auto xi = x.id;
  return t.record(Tensor::scalar(xv[i]), t.requires_grad(xi), [xi, i](Tape& tp, std::uint32_t self) {
    tp.grad(xi)[i] += tp.grad(self)[0];
  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x.id);
  if (shape.numel() != xv.size()) {
    throw DimensionError("reshape: " + xv.shape().str() + " -> " + shape.str());
  }
  Tensor out(shape, xv.values());
  const auto xi = x.id;
  return t.record(std::move(out), t.requires_grad(xi), [xi](Tape& tp, std::uint32_t self) {
    as_vec(tp.grad(xi)) += as_vec(tp.grad(self));
  });
}

Var cross_entropy(const Tensor& target, Var pred) {
  Tape& t = *pred.tape;
  const Tensor& pv = t.value(pred.id);
  require_same_shape(target, pv, "cross_entropy");
  double total = 0.0;
  for (double v : target.values()) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw ContractError("cross_entropy: target has a negative or non-finite entry");
    }
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw ContractError("cross_entropy: target sums to " + std::to_string(total) + ", not 1");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (target[i] > 0.0) loss -= target[i] * std::log(std::max(pv[i], kProbFloor));
  }
  const auto pi = pred.id;
  return t.record(Tensor::scalar(loss), t.requires_grad(pi),
                  [pi, target](Tape& tp, std::uint32_t self) {
                    const double g = tp.grad(self)[0];
                    const Tensor& p = tp.value(pi);
                    Tensor& gp = tp.grad(pi);
                    for (std::size_t i = 0; i < p.size(); ++i) {
                      if (target[i] > 0.0 && p[i] > kProbFloor) gp[i] -= g * target[i] / p[i];
                    }
                  });
}

Var l1(Var a, Var b) { return sum(abs(sub(a, b))); }

}  // namespace replaygate::nc
