// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "replaygate/agent.hpp"
#include "replaygate/numcore/ops.hpp"
#include "replaygate/rollout.hpp"

namespace {

using namespace replaygate;

void BM_MovementTick(benchmark::State& state) {
  Agent agent(AgentConfig{}, 1);
  EnvConfig env;
  nc::Rng rng(1);
  const EnvState s = reset(env, Phase::kTrain, rng);
  const Observation obs = render_observation(s, env, 0.0, 2);
  AgentState as = agent.initial_state();
  for (auto _ : state) {
    TickResult t = agent.tick(as, &obs);
    benchmark::DoNotOptimize(t.value);
  }
}
BENCHMARK(BM_MovementTick);

void BM_ReplayTick(benchmark::State& state) {
  Agent agent(AgentConfig{}, 1);
  AgentState as = agent.initial_state();
  as.replay_gate = true;
  for (auto _ : state) {
    TickResult t = agent.tick(as, nullptr);
    benchmark::DoNotOptimize(t.value);
  }
}
BENCHMARK(BM_ReplayTick);

void BM_RunnerAdvance(benchmark::State& state) {
  Agent agent(AgentConfig{}, 1);
  Runner runner(agent, EnvConfig{}, Phase::kTrain, 3);
  for (auto _ : state) {
    MoveRecord r = runner.advance(ActionMode::kSample);
    benchmark::DoNotOptimize(r.reward);
  }
}
BENCHMARK(BM_RunnerAdvance);

// Forward + backward through a GRU replay step with gradients into the passage.
void BM_ReplayStepBackward(benchmark::State& state) {
  Agent agent(AgentConfig{}, 1);
  const std::size_t steps = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    nc::Tape tape;
    nc::Var h = tape.constant(nc::Tensor(nc::Shape{agent.config().hf_hidden}, 0.1));
    nc::Var th = tape.constant(nc::Tensor(nc::Shape{agent.config().pfc_hidden}, 0.1));
    for (std::size_t k = 0; k < steps; ++k) {
      ModuleInput hi{true, std::nullopt, agent.message_to_hf(tape, th)};
      ModuleInput pi{true, std::nullopt, agent.message_to_pfc(tape, h)};
      const HfVars hv = agent.hf_step(tape, h, hi);
      const PfcVars pv = agent.pfc_step(tape, th, pi);
      h = hv.h;
      th = pv.theta;
    }
    tape.backward(nc::sum(th));
    agent.params().zero_grad();
  }
}
BENCHMARK(BM_ReplayStepBackward)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
