// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "finite_diff.hpp"
#include "replaygate/errors.hpp"
#include "replaygate/numcore/adam.hpp"
#include "replaygate/numcore/checkpoint.hpp"
#include "replaygate/numcore/nn.hpp"
#include "replaygate/numcore/ops.hpp"
#include "replaygate/numcore/rng.hpp"

using namespace replaygate;
using namespace replaygate::nc;

namespace {

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t(s);
  for (double& v : t.values()) v = rng.normal() * scale;
  return t;
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape t;
  const Var eye = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const Var m = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(matmul(eye, m).value() == m.value());

  const Var row = t.constant(Tensor::matrix(1, 2, {1, 2}));
  const Var col = t.constant(Tensor::matrix(2, 1, {3, 4}));
  CHECK(matmul(row, col).value().item() == 11.0);

  const Var zero = t.constant(Tensor(Shape{2, 3}));
  const Var any = t.constant(Tensor::matrix(3, 2, {1, -2, 3, 4, 5, 6}));
  for (double v : matmul(zero, any).value().values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(matmul(m, any), DimensionError);
}

TEST_CASE("activations and softmax") {
  Tape t;
  const Var zero = t.constant(Tensor::vector({0.0}));
  CHECK(nc::tanh(zero).item() == 0.0);
  CHECK(sigmoid(zero).item() == 0.5);

  const Var flat = softmax(t.constant(Tensor::vector({0, 0, 0})));
  for (double v : flat.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Var s = softmax(t.constant(Tensor::vector({1, 2, 3})));
  CHECK(s.value()[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(std::fabs(s.value()[0] - 0.09003) < 1e-5);
  CHECK(std::fabs(s.value()[1] - 0.24473) < 1e-5);
  CHECK(std::fabs(s.value()[2] - 0.66524) < 1e-5);
}

TEST_CASE("softmax sums to one and stays positive on random rows") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Tape t;
    const Var s = softmax(t.constant(random_tensor(Shape{3, 9}, rng, 20.0)));
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        CHECK(s.value().at(r, c) > 0.0);
        sum += s.value().at(r, c);
      }
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("gru_cell examples") {
  Rng rng(3);
  ParamStore store;
  GruWeights w = make_gru(store, "g", 3, 4, rng);
  for (Param* p : store.all()) p->value.fill(0.0);

  Tape t;
  const Tensor h_prev = Tensor::vector({0.3, -0.7, 1.2, 0.0});
  const Var h = gru_cell(t.constant(Tensor::vector({5, -2, 9})), t.constant(h_prev), w);
  for (std::size_t i = 0; i < 4; ++i) CHECK(h.value()[i] == 0.5 * h_prev[i]);

  const Var h0 = gru_cell(t.constant(Tensor(Shape{3})), t.constant(Tensor(Shape{4})), w);
  for (double v : h0.value().values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(gru_cell(t.constant(Tensor(Shape{2})), t.constant(Tensor(Shape{4})), w),
                  DimensionError);
}

TEST_CASE("gru_cell scalar oracle") {
  Rng rng(1);
  ParamStore store;
  GruWeights w = make_gru(store, "g", 1, 1, rng);
  w.w_in->value = Tensor::matrix(3, 1, {0.5, -0.3, 0.8});
  w.w_rec->value = Tensor::matrix(3, 1, {0.2, 0.4, -0.6});
  w.b_in->value = Tensor::vector({0.1, -0.1, 0.05});
  w.b_rec->value = Tensor::vector({0.0, 0.2, -0.05});
  Tape t;
  const Var h = gru_cell(t.constant(Tensor::vector({1.0})), t.constant(Tensor::vector({0.5})), w);
  // r = sig(0.7), z = sig(0) = 0.5, n = tanh(0.85 - 0.35 r), h' = 0.5 n + 0.25.
  CHECK(h.item() == doctest::Approx(0.524215378582209).epsilon(1e-13));
}

TEST_CASE("loss examples") {
  Tape t;
  Tensor uniform(Shape{25}, 1.0 / 25.0);
  CHECK(cross_entropy(uniform, t.constant(uniform)).item() ==
        doctest::Approx(std::log(25.0)).epsilon(1e-12));
  CHECK(std::fabs(cross_entropy(uniform, t.constant(uniform)).item() - 3.21888) < 1e-5);

  Tensor onehot(Shape{3});
  onehot[1] = 1.0;
  const Var pred = t.constant(Tensor::vector({0.005, 0.99, 0.005}));
  CHECK(std::fabs(cross_entropy(onehot, pred).item() - 0.01005) < 1e-5);

  CHECK(l1(t.constant(Tensor::vector({0.5, 0})), t.constant(Tensor::vector({0, 0}))).item() == 0.5);

  CHECK_THROWS_AS(cross_entropy(Tensor::vector({0.5, 0.6, 0.0}), pred), ContractError);
  CHECK_THROWS_AS(cross_entropy(Tensor::vector({1.5, -0.5, 0.0}), pred), ContractError);
}

TEST_CASE("log clamps at the probability floor") {
  Tape t;
  Tensor target(Shape{2});
  target[0] = 1.0;
  const Var pred = t.constant(Tensor::vector({0.0, 1.0}));
  CHECK(cross_entropy(target, pred).item() == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("backward analytic examples") {
  Param w("w", Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.4, 0.5, 0.6}));
  Param unused("u", Tensor::vector({1.0, 2.0}));
  const Tensor x = Tensor::vector({1.5, -2.0, 0.25});
  Tape t;
  const Var y = linear(t.constant(x), t.param(w));
  t.param(unused);
  t.backward(sum(y));
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(w.grad.at(r, c) == x[c]);
  }
  for (double g : unused.grad.values()) CHECK(g == 0.0);
}

TEST_CASE("backward on an empty tape is a no-op") {
  Tape t;
  Tape other;
  const Var loss = other.constant(Tensor::scalar(1.0));
  CHECK_NOTHROW(t.backward(loss));
}

TEST_CASE("frozen params still receive gradients") {
  Param w("w", Tensor::vector({2.0}), /*frozen=*/true);
  Tape t;
  t.backward(sum(mul(t.param(w), t.param(w))));
  CHECK(w.grad[0] == 4.0);
}

TEST_CASE("finite differences agree with every differentiable op") {
  Rng rng(11);
  Param a("a", random_tensor(Shape{3, 4}, rng, 0.7));
  Param b("b", random_tensor(Shape{4, 5}, rng, 0.7));
  Param c("c", random_tensor(Shape{3, 4}, rng, 0.7));
  Param bias("bias", random_tensor(Shape{5}, rng, 0.3));
  Param v("v", random_tensor(Shape{6}, rng, 0.7));
  Param pos("pos", Tensor::vector({0.3, 0.9, 1.7, 0.6}));
  const std::vector<Param*> ps = {&a, &b, &c, &bias, &v, &pos};

  Tensor target(Shape{6}, 0.0);
  target[0] = 0.2;
  target[3] = 0.5;
  target[5] = 0.3;

  const std::vector<std::pair<const char*, std::function<Var(Tape&)>>> cases = {
      {"matmul", [&](Tape& t) { return sum(square(matmul(t.param(a), t.param(b)))); }},
      {"linear", [&](Tape& t) {
         return sum(nc::tanh(linear(t.param(a), t.param(c), slice(t.param(v), 0, 3))));
       }},
      {"linear_vec", [&](Tape& t) {
         return sum(square(linear(slice(t.param(v), 0, 4), t.param(c), slice(t.param(bias), 0, 3))));
       }},
      {"add_sub_mul", [&](Tape& t) {
         return sum(mul(add(t.param(a), t.param(c)), sub(t.param(a), scale(t.param(c), 0.5))));
       }},
      {"sigmoid_exp", [&](Tape& t) { return sum(mul(sigmoid(t.param(a)), nc::exp(t.param(c)))); }},
      {"relu_abs", [&](Tape& t) { return sum(add(relu(t.param(a)), nc::abs(t.param(c)))); }},
      {"log", [&](Tape& t) { return sum(nc::log(t.param(pos))); }},
      {"softmax_ce", [&](Tape& t) { return cross_entropy(target, softmax(t.param(v))); }},
      {"log_softmax", [&](Tape& t) { return sum(mul(log_softmax(t.param(a)), t.param(c))); }},
      {"softmax_rows", [&](Tape& t) { return sum(mul(softmax(t.param(a)), t.param(c))); }},
      {"clamp_min", [&](Tape& t) {
         return sum(minimum(mul(t.param(a), t.param(c)), clamp(t.param(a), -0.4, 0.4)));
       }},
      {"concat_slice_pick", [&](Tape& t) {
         const Var parts[] = {t.param(v), t.param(pos)};
         const Var cat = concat(parts);
         return add(sum(square(slice(cat, 2, 6))), mul(pick(cat, 1), pick(cat, 9)));
       }},
      {"gather", [&](Tape& t) {
         return sum(square(gather(t.param(a), {0, 5, 5, 11, 3, 7}, Shape{2, 3})));
       }},
      {"sum_last_mean", [&](Tape& t) {
         return add(sum(square(sum_last(t.param(a)))), mean(nc::tanh(t.param(c))));
       }},
      {"l1", [&](Tape& t) { return l1(t.param(a), t.param(c)); }},
      {"one_minus", [&](Tape& t) { return sum(mul(one_minus(t.param(a)), t.param(c))); }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(std::string(name));
    const auto res = testing::check_gradients(fn, ps);
    CHECK(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("finite differences agree through an unrolled GRU") {
  Rng rng(5);
  ParamStore store;
  GruWeights w = make_gru(store, "g", 3, 5, rng);
  for (Param* p : store.all()) {
    for (double& x : p->value.values()) x += 0.1 * rng.normal();
  }
  std::vector<Tensor> xs;
  for (int k = 0; k < 6; ++k) xs.push_back(random_tensor(Shape{3}, rng));
  auto loss = [&](Tape& t) {
    Var h = t.constant(Tensor(Shape{5}));
    for (const Tensor& x : xs) h = gru_cell(t.constant(x), h, w);
    return sum(square(h));
  };
  const auto res = testing::check_gradients(loss, store.all());
  CHECK(res.checked > 50);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("adam examples") {
  Param p("p", Tensor::vector({1.0, -1.0}));
  Adam opt(AdamConfig{.lr = 0.01});
  p.grad = Tensor::vector({0.3, -2.0});
  Param* ps[] = {&p};
  opt.step(ps);
  // Bias correction makes the first update exactly lr * sign(g) up to eps.
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
  CHECK(p.value[1] == doctest::Approx(-1.0 + 0.01).epsilon(1e-9));
  for (double g : p.grad.values()) CHECK(g == 0.0);

  Param still("s", Tensor::vector({4.0}));
  Param* ss[] = {&still};
  Adam opt2;
  opt2.step(ss);
  CHECK(still.value[0] == 4.0);
}

TEST_CASE("adam matches a scalar reference over repeated steps") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w = 1.0, m = 0.0, v = 0.0;
  Param p("p", Tensor::vector({1.0}));
  Adam opt(AdamConfig{lr, b1, b2, eps});
  Param* ps[] = {&p};
  for (int t = 1; t <= 2; ++t) {
    const double g = 0.3;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    p.grad[0] = g;
    opt.step(ps);
    CHECK(std::fabs(p.value[0] - w) <= 1e-12);
  }
}

TEST_CASE("frozen params are bit-identical across adam steps") {
  Rng rng(2);
  Param p("p", random_tensor(Shape{4, 4}, rng), /*frozen=*/true);
  const Tensor before = p.value;
  Adam opt;
  Param* ps[] = {&p};
  for (int i = 0; i < 50; ++i) {
    p.grad = random_tensor(Shape{4, 4}, rng);
    opt.step(ps);
  }
  CHECK(p.value == before);
}

TEST_CASE("rng determinism and distributions") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(9);
  const double w[] = {1.0, 0.0, 0.0};
  for (int i = 0; i < 100; ++i) CHECK(c.categorical(w) == 0);

  Rng d(42);
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) s += d.uniform();
  CHECK(std::fabs(s / 100000 - 0.5) < 0.01);

  // mt19937_64 is fully specified: the 10000th output for the default seed.
  std::mt19937_64 ref;
  ref.discard(9999);
  CHECK(ref() == 9981545732273789042ULL);
}

TEST_CASE("identical seeds and op sequences give bit-identical tensors") {
  auto run = [] {
    Rng rng(77);
    ParamStore store;
    GruWeights w = make_gru(store, "g", 4, 6, rng);
    Tape t;
    Var h = t.constant(Tensor(Shape{6}));
    for (int k = 0; k < 5; ++k) h = gru_cell(t.constant(random_tensor(Shape{4}, rng)), h, w);
    return h.value();
  };
  CHECK(run() == run());
}

TEST_CASE("orthogonal init is orthogonal") {
  Rng rng(4);
  const Tensor q = orthogonal(6, rng);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 6; ++k) d += q.at(k, i) * q.at(k, j);
      CHECK(d == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(8);
  ParamStore store;
  store.add("a.w", random_tensor(Shape{3, 5}, rng));
  store.add("b", random_tensor(Shape{7}, rng), /*frozen=*/true);
  store.add("c", Tensor::vector({std::nextafter(1.0, 2.0), -0.0, 1e-300}));
  const CheckpointMeta meta{42, "abc123", "pretrain", 9000};

  const std::string text = checkpoint_to_string(store, meta);
  ParamStore back;
  const CheckpointMeta got = checkpoint_from_string(text, back);
  CHECK(got == meta);
  for (const Param* p : store.all()) {
    CHECK(back.at(p->name).value == p->value);
    CHECK(back.at(p->name).frozen == p->frozen);
  }
  CHECK(std::signbit(back.at("c").value[1]));

  const auto path = std::filesystem::temp_directory_path() / "replaygate_ckpt_test.json";
  save_checkpoint(path, store, meta);
  ParamStore back2;
  CHECK(load_checkpoint(path, back2) == meta);
  CHECK(back2.at("a.w").value == store.at("a.w").value);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints report a parse error with offset") {
  ParamStore store;
  try {
    checkpoint_from_string("{\"format\": \"replaygate-checkpoint-v1\", \"metadata\": {", store);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() > 0);
  }
  CHECK_THROWS_AS(decode_f64("abc"), ParseError);
}
