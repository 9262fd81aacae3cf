// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "finite_diff.hpp"
#include "replaygate/agent.hpp"
#include "replaygate/errors.hpp"
#include "replaygate/numcore/ops.hpp"
#include "replaygate/rollout.hpp"

using namespace replaygate;
using nc::Tensor;

namespace {

AgentConfig small_config() {
  AgentConfig c;
  c.conv_filters = 2;
  c.embed_dim = 4;
  c.hf_hidden = 8;
  c.hf_input = 6;
  c.pfc_hidden = 5;
  return c;
}

Tensor random_vec(std::size_t n, nc::Rng& rng, double scale = 0.5) {
  Tensor t(nc::Shape{n});
  for (double& v : t.values()) v = rng.normal() * scale;
  return t;
}

AgentState random_state(const Agent& agent, nc::Rng& rng) {
  AgentState s = agent.initial_state();
  if (agent.config().has_hf()) s.h = random_vec(agent.config().hf_hidden, rng);
  s.theta = random_vec(agent.config().pfc_hidden, rng);
  return s;
}

Observation obs_at(GridPos p, double prev_reward = 0.0, int prev_action = -1) {
  EnvConfig env;
  EnvState s;
  s.agent = p;
  return render_observation(s, env, prev_reward, prev_action);
}

void check_bitwise_equal(const Tensor& a, const Tensor& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

}  // namespace

TEST_CASE("replay gate ignores the observation") {
  Agent agent(AgentConfig{}, 3);
  nc::Rng rng(1);
  AgentState s = random_state(agent, rng);
  s.replay_gate = true;
  const Observation a = obs_at({0, 0}, 0.5, 1);
  const Observation b = obs_at({2, 2}, 1.0, 3);
  const TickResult ra = agent.tick(s, &a);
  const TickResult rb = agent.tick(s, &b);
  const TickResult rn = agent.tick(s, nullptr);
  for (const TickResult* r : {&rb, &rn}) {
    check_bitwise_equal(ra.next.h, r->next.h);
    check_bitwise_equal(ra.next.theta, r->next.theta);
    check_bitwise_equal(ra.place_field, r->place_field);
    check_bitwise_equal(ra.reward_pred, r->reward_pred);
    check_bitwise_equal(ra.logits, r->logits);
    CHECK(ra.value == r->value);
  }
}

TEST_CASE("closed gate isolates the modules") {
  Agent agent(AgentConfig{}, 4);
  nc::Rng rng(2);
  const AgentState s = random_state(agent, rng);
  const Observation o = obs_at({1, 3}, 0.5, 0);

  AgentState other_theta = s;
  other_theta.theta = random_vec(agent.config().pfc_hidden, rng, 3.0);
  const TickResult base = agent.tick(s, &o);
  const TickResult t1 = agent.tick(other_theta, &o);
  check_bitwise_equal(base.next.h, t1.next.h);
  check_bitwise_equal(base.place_field, t1.place_field);
  check_bitwise_equal(base.reward_pred, t1.reward_pred);

  AgentState other_h = s;
  other_h.h = random_vec(agent.config().hf_hidden, rng, 3.0);
  const TickResult t2 = agent.tick(other_h, &o);
  check_bitwise_equal(base.next.theta, t2.next.theta);
  check_bitwise_equal(base.logits, t2.logits);
  CHECK(base.value == t2.value);
}

TEST_CASE("module input contract") {
  Agent agent(small_config(), 1);
  nc::Tape tape;
  const nc::Var h = tape.constant(Tensor(nc::Shape{8}));
  const nc::Var theta = tape.constant(Tensor(nc::Shape{5}));
  const nc::Var u = agent.input_triple(tape, agent.encode(tape, obs_at({2, 0})), 0.0, -1);
  const nc::Var m = tape.constant(Tensor(nc::Shape{6}));

  ModuleInput both{false, u, m};
  CHECK_THROWS_AS(agent.hf_step(tape, h, both), ContractError);
  ModuleInput open_no_msg{true, u, std::nullopt};
  CHECK_THROWS_AS(agent.hf_step(tape, h, open_no_msg), ContractError);
  ModuleInput closed_no_input{false, std::nullopt, std::nullopt};
  CHECK_THROWS_AS(agent.pfc_step(tape, theta, closed_no_input), ContractError);
  ModuleInput good{false, u, std::nullopt};
  CHECK_NOTHROW(agent.hf_step(tape, h, good));
  CHECK_NOTHROW(agent.pfc_step(tape, theta, good));

  AgentState s = agent.initial_state();
  CHECK_THROWS_AS(agent.tick(s, nullptr), ContractError);
}

TEST_CASE("zero parameters give a uniform policy and zero embedding") {
  Agent agent(AgentConfig{}, 5);
  for (nc::Param* p : agent.params().all()) p->value.fill(0.0);
  nc::Rng rng(3);
  const AgentState s = random_state(agent, rng);
  const Observation o = obs_at({4, 4}, 1.0, 2);
  const TickResult r = agent.tick(s, &o);
  for (double l : r.logits.values()) CHECK(l == r.logits[0]);

  nc::Tape tape;
  const nc::Var e = agent.encode(tape, o);
  for (double v : e.value().values()) CHECK(v == 0.0);
}

TEST_CASE("embedding dimension and determinism over all cells") {
  Agent agent(AgentConfig{}, 6);
  EnvConfig env;
  for (int i = 0; i < env.num_cells(); ++i) {
    const Observation o = obs_at(env.cell_pos(i));
    nc::Tape t1;
    nc::Tape t2;
    const Tensor e1 = agent.encode(t1, o).value();
    const Tensor e2 = agent.encode(t2, o).value();
    CHECK(e1.size() == agent.config().embed_dim);
    CHECK(e1 == e2);
  }
}

TEST_CASE("place field is normalised at every step") {
  Agent agent(AgentConfig{}, 7);
  EnvConfig env;
  Runner runner(agent, env, Phase::kTrain, 9);
  int replays = 0;
  for (int i = 0; i < 300; ++i) {
    const MoveRecord rec = runner.advance(ActionMode::kSample);
    double z = 0.0;
    for (double v : rec.place_field.values()) z += v;
    CHECK(std::fabs(z - 1.0) <= 1e-12);
    CHECK(rec.reward_pred.size() == 11);
    if (rec.replay) {
      ++replays;
      for (const Tensor& pf : rec.replay->place_fields) {
        double zr = 0.0;
        for (double v : pf.values()) zr += v;
        CHECK(std::fabs(zr - 1.0) <= 1e-12);
      }
    }
  }
  CHECK(replays > 0);
}

TEST_CASE("replay length follows the configured step count") {
  for (std::size_t n : {2u, 4u, 6u}) {
    AgentConfig c;
    c.replay_steps = n;
    Agent agent(c, 8);
    nc::Rng rng(4);
    const AgentState s = random_state(agent, rng);
    const ReplayEvent ev = replay_rollout(agent, s, n, 0.5, {}, rng, EnvConfig{});
    CHECK(ev.decoded_cells.size() == n);
    CHECK(ev.msgs_to_pfc.size() == n);
    CHECK(ev.msgs_to_hf.size() == n);
    CHECK(ev.h_states.size() == n);
    CHECK_FALSE(ev.post_state.replay_gate);
  }
  AgentConfig one;
  one.variant = Variant::kOneStepEmission;
  CHECK(one.effective_replay_steps() == 1);
  AgentConfig none;
  none.variant = Variant::kNoHf;
  CHECK(none.effective_replay_steps() == 0);
}

TEST_CASE("replay contract errors") {
  Agent agent(AgentConfig{}, 9);
  nc::Rng rng(5);
  const AgentState s = random_state(agent, rng);
  CHECK_THROWS_AS(replay_rollout(agent, s, 4, 0.0, {}, rng, EnvConfig{}), ContractError);
  AblationSpec too_many;
  too_many.mode = AblationMode::kMaskLastN;
  too_many.n = 5;
  CHECK_THROWS_AS(replay_rollout(agent, s, 4, 1.0, too_many, rng, EnvConfig{}), ContractError);

  AgentConfig c;
  c.variant = Variant::kNoHf;
  Agent no_hf(c, 9);
  CHECK_THROWS_AS(replay_rollout(no_hf, no_hf.initial_state(), 4, 1.0, {}, rng, EnvConfig{}),
                  ContractError);
}

TEST_CASE("zero h-to-theta messages equal a passage-free policy update") {
  Agent agent(AgentConfig{}, 10);
  nc::Rng rng(6);
  const AgentState s = random_state(agent, rng);
  AblationSpec spec;
  spec.mode = AblationMode::kReplaceHToTheta;
  spec.fill = AblationFill::kZeros;
  const ReplayEvent ev = replay_rollout(agent, s, 4, 1.0, spec, rng, EnvConfig{});

  // theta_k = tanh(W theta_{k-1} + b), evaluated directly.
  const Tensor& w = agent.params().at("pfc.rec.w").value;
  const Tensor& b = agent.params().at("pfc.b").value;
  const std::size_t n = agent.config().pfc_hidden;
  std::vector<double> theta(s.theta.values().begin(), s.theta.values().end());
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < n; ++j) acc += w[i * n + j] * theta[j];
      next[i] = std::tanh(acc);
    }
    theta = next;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(ev.theta_states[k][i] == doctest::Approx(theta[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("mask and shuffle ablations") {
  Agent agent(AgentConfig{}, 11);
  nc::Rng rng(7);
  const AgentState s = random_state(agent, rng);
  nc::Rng r0(1);
  const ReplayEvent base = replay_rollout(agent, s, 4, 1.0, {}, r0, EnvConfig{});

  AblationSpec mask0;
  mask0.mode = AblationMode::kMaskLastN;
  mask0.n = 0;
  nc::Rng r1(1);
  const ReplayEvent m0 = replay_rollout(agent, s, 4, 1.0, mask0, r1, EnvConfig{});
  CHECK(m0.post_state.theta == base.post_state.theta);

  AblationSpec mask_all = mask0;
  mask_all.n = 4;
  mask_all.fill = AblationFill::kZeros;
  AblationSpec replace;
  replace.mode = AblationMode::kReplaceHToTheta;
  replace.fill = AblationFill::kZeros;
  nc::Rng r2(1);
  nc::Rng r3(1);
  CHECK(replay_rollout(agent, s, 4, 1.0, mask_all, r2, EnvConfig{}).post_state.theta ==
        replay_rollout(agent, s, 4, 1.0, replace, r3, EnvConfig{}).post_state.theta);

  // Masking the final message leaves the HF trajectory and earlier policy states alone.
  AblationSpec mask1 = mask_all;
  mask1.n = 1;
  nc::Rng r4(1);
  const ReplayEvent m1 = replay_rollout(agent, s, 4, 1.0, mask1, r4, EnvConfig{});
  for (std::size_t k = 0; k < 3; ++k) CHECK(m1.theta_states[k] == base.theta_states[k]);
  CHECK_FALSE(m1.theta_states[3] == base.theta_states[3]);

  AblationSpec shuffle;
  shuffle.mode = AblationMode::kShuffleOrder;
  nc::Rng r5(3);
  const ReplayEvent sh = replay_rollout(agent, s, 4, 1.0, shuffle, r5, EnvConfig{});
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(sh.h_states[k] == base.h_states[k]);
    CHECK(sh.msgs_to_pfc[k] == base.msgs_to_pfc[k]);
  }
}

TEST_CASE("replay leaves the environment untouched") {
  Agent agent(AgentConfig{}, 12);
  EnvConfig env;
  Runner runner(agent, env, Phase::kTrain, 13);
  int checked = 0;
  for (int i = 0; i < 500 && checked < 5; ++i) {
    const EnvState before = runner.env_state();
    const MoveRecord rec = runner.advance(ActionMode::kSample);
    if (!rec.replay || rec.done) continue;
    const StepResult expected = step(before, static_cast<Action>(rec.action), env);
    CHECK(runner.env_state() == expected.state);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("HF movement dynamics do not depend on policy parameters") {
  Agent a(AgentConfig{}, 14);
  Agent b(AgentConfig{}, 14);
  nc::Rng rng(8);
  for (nc::Param* p : b.params().with_prefix("pfc.")) {
    for (double& v : p->value.values()) v = rng.normal();
  }
  AgentState sa = a.initial_state();
  AgentState sb = b.initial_state();
  EnvConfig env;
  for (int i = 0; i < 30; ++i) {
    const Observation o = obs_at(env.cell_pos(static_cast<int>(rng.uniform_index(25))), 0.0,
                                 static_cast<int>(rng.uniform_index(4)));
    sa = a.tick(sa, &o).next;
    sb = b.tick(sb, &o).next;
    CHECK(sa.h == sb.h);
  }
}

TEST_CASE("gaussian target") {
  EnvConfig env;
  const Tensor one_hot = gaussian_target({1, 2}, 0.0, env);
  CHECK(one_hot[static_cast<std::size_t>(env.cell_index({1, 2}))] == 1.0);
  const Tensor g = gaussian_target({3, 1}, 0.75, env);
  double z = 0.0;
  for (double v : g.values()) z += v;
  CHECK(z == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(argmax(g.span()) == env.cell_index({3, 1}));
}

TEST_CASE("replay-coupled window gradients match finite differences") {
  Agent agent(small_config(), 15);
  EnvConfig env;
  // Perturb every param so no gradient is trivially zero.
  nc::Rng rng(9);
  for (nc::Param* p : agent.params().all()) {
    for (double& v : p->value.values()) v += rng.normal() * 0.3;
  }
  const Observation o1 = obs_at({2, 0}, 0.0, -1);
  const Observation o2 = obs_at({1, 2}, 0.0, 0);
  const Tensor target = gaussian_target({1, 2}, 0.75, env);

  auto loss = [&](nc::Tape& t) {
    nc::Var h = t.constant(Tensor(nc::Shape{8}));
    nc::Var theta = t.constant(Tensor(nc::Shape{5}));
    nc::Var total = t.constant(Tensor::scalar(0.0));
    for (const Observation* o : {&o1, &o2}) {
      ModuleInput in;
      in.external = agent.input_triple(t, agent.encode(t, *o), o->prev_reward, o->prev_action);
      const HfVars hv = agent.hf_step(t, h, in);
      const PfcVars pv = agent.pfc_step(t, theta, in);
      total = nc::add(total, nc::cross_entropy(target, hv.place_field));
      total = nc::add(total, nc::sum(nc::square(hv.reward)));
      total = nc::add(total, nc::pick(nc::log_softmax(pv.logits), 1));
      h = hv.h;
      theta = pv.theta;
    }
    for (int k = 0; k < 4; ++k) {
      ModuleInput hin{true, std::nullopt, agent.message_to_hf(t, theta)};
      ModuleInput pin{true, std::nullopt, agent.message_to_pfc(t, h)};
      const HfVars hv = agent.hf_step(t, h, hin);
      const PfcVars pv = agent.pfc_step(t, theta, pin);
      h = hv.h;
      theta = pv.theta;
      total = nc::add(total, nc::cross_entropy(target, hv.place_field));
      total = nc::add(total, nc::square(pv.value));
    }
    return total;
  };
  const auto res = testing::check_gradients(loss, agent.params().all(), 1e-5, 40);
  CHECK(res.checked > 200);
  CHECK(res.max_rel_err < 1e-4);
}
