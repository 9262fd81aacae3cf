// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include "doctest.h"
#include "replaygate/errors.hpp"
#include "replaygate/gridworld.hpp"

using namespace replaygate;

namespace {

double cell(const Observation& o, std::size_t ch, std::size_t r, std::size_t c) {
  return o.visual[ch * kWindow * kWindow + r * kWindow + c];
}

// Walks a fixed action list, returning the summed reward.
double walk(EnvState& s, const EnvConfig& cfg, std::initializer_list<Action> actions) {
  double total = 0.0;
  for (Action a : actions) {
    const StepResult r = step(s, a, cfg);
    total += r.reward;
    s = r.state;
  }
  return total;
}

}  // namespace

TEST_CASE("canonical layout is valid") {
  EnvConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.center_cells().size() == 9);
  EnvConfig bad = cfg;
  bad.checkpoint1 = {0, 0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.goal = bad.start;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("test phases pin the checkpoint") {
  EnvConfig cfg;
  nc::Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    CHECK(reset(cfg, Phase::kTestPre, rng, GridPos{3, 3}).active_checkpoint == cfg.checkpoint1);
    CHECK(reset(cfg, Phase::kTestPost, rng, GridPos{3, 3}).active_checkpoint == cfg.checkpoint2);
  }
  const EnvState s = reset(cfg, Phase::kTrain, rng);
  CHECK(s.agent == cfg.start);
  CHECK_FALSE(s.checkpoint_visited);
  CHECK(s.step_count == 0);
}

TEST_CASE("relocation frequency over ten thousand resets") {
  EnvConfig cfg;
  nc::Rng rng(11);
  EnvState s = reset(cfg, Phase::kTrain, rng);
  int relocations = 0;
  const int n = 10000;
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < n; ++i) {
    s = reset(cfg, Phase::kTrain, rng, s.active_checkpoint);
    if (s.relocated_at_reset) ++relocations;
    seen.insert({s.active_checkpoint.x, s.active_checkpoint.y});
  }
  CHECK(std::abs(relocations / static_cast<double>(n) - 0.1) <= 0.01);
  CHECK(seen.size() == 9);
}

TEST_CASE("zero relocation keeps the checkpoint") {
  EnvConfig cfg;
  cfg.relocation_prob = 0.0;
  nc::Rng rng(5);
  EnvState s = reset(cfg, Phase::kTrain, rng);
  const GridPos first = s.active_checkpoint;
  for (int i = 0; i < 1000; ++i) {
    s = reset(cfg, Phase::kTrain, rng, s.active_checkpoint);
    CHECK(s.active_checkpoint == first);
  }
}

TEST_CASE("edge clamping") {
  EnvConfig cfg;
  EnvState s;
  s.agent = {0, 0};
  s.active_checkpoint = cfg.checkpoint1;
  const StepResult r = step(s, Action::kLeft, cfg);
  CHECK(r.state.agent == GridPos{0, 0});
  CHECK(r.reward == 0.0);
  CHECK(step(s, Action::kDown, cfg).state.agent == GridPos{0, 0});
  s.agent = {4, 4};
  CHECK(step(s, Action::kUp, cfg).state.agent == GridPos{4, 4});
  CHECK(step(s, Action::kRight, cfg).state.agent == GridPos{4, 4});
}

TEST_CASE("goal pays only after the checkpoint") {
  EnvConfig cfg;
  nc::Rng rng(1);
  EnvState s = reset(cfg, Phase::kTestPre, rng);
  // Straight up from S=(2,0) to G=(2,4) misses C1=(1,2).
  CHECK(walk(s, cfg, {Action::kUp, Action::kUp, Action::kUp}) == 0.0);
  const StepResult r = step(s, Action::kUp, cfg);
  CHECK(r.state.agent == cfg.goal);
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);
  CHECK_FALSE(r.success);
}

TEST_CASE("full path pays 1.5 and ends the episode") {
  EnvConfig cfg;
  nc::Rng rng(1);
  EnvState s = reset(cfg, Phase::kTestPre, rng);
  // S=(2,0) -> C1=(1,2) -> G=(2,4): 3 + 3 steps.
  double total = walk(s, cfg, {Action::kUp, Action::kUp, Action::kLeft});
  CHECK(total == 0.5);
  CHECK(s.checkpoint_visited);
  total += walk(s, cfg, {Action::kUp, Action::kUp});
  const StepResult r = step(s, Action::kRight, cfg);
  total += r.reward;
  CHECK(total == 1.5);
  CHECK(r.done);
  CHECK(r.success);
  CHECK_THROWS_AS(step(r.state, Action::kUp, cfg), ContractError);
}

TEST_CASE("checkpoint pays once per episode") {
  EnvConfig cfg;
  nc::Rng rng(1);
  EnvState s = reset(cfg, Phase::kTestPre, rng);
  CHECK(walk(s, cfg, {Action::kUp, Action::kUp, Action::kLeft, Action::kRight, Action::kLeft}) == 0.5);
}

TEST_CASE("episode ends at the step limit") {
  EnvConfig cfg;
  cfg.max_episode_steps = 5;
  nc::Rng rng(1);
  EnvState s = reset(cfg, Phase::kTestPre, rng);
  for (int i = 0; i < 4; ++i) {
    const StepResult r = step(s, Action::kDown, cfg);
    CHECK_FALSE(r.done);
    s = r.state;
  }
  const StepResult r = step(s, Action::kDown, cfg);
  CHECK(r.done);
  CHECK_FALSE(r.success);
  CHECK(r.state.step_count == 5);
}

TEST_CASE("rendering is deterministic and partial") {
  EnvConfig cfg;
  EnvState a;
  a.agent = {1, 1};
  const Observation o1 = render_observation(a, cfg, 0.5, 2);
  const Observation o2 = render_observation(a, cfg, 0.5, 2);
  CHECK(o1.visual == o2.visual);
  CHECK(o1.prev_reward == 0.5);
  CHECK(o1.prev_action_one_hot()[2] == 1.0);

  // Every interior cell sees open floor all around.
  EnvState b = a;
  b.agent = {3, 3};
  CHECK(render_observation(a, cfg, 0, -1).visual == render_observation(b, cfg, 0, -1).visual);
  b.agent = {2, 2};
  CHECK(render_observation(a, cfg, 0, -1).visual == render_observation(b, cfg, 0, -1).visual);
}

TEST_CASE("renderer over all 25 cells") {
  EnvConfig cfg;
  for (int i = 0; i < cfg.num_cells(); ++i) {
    EnvState s;
    s.agent = cfg.cell_pos(i);
    const Observation o = render_observation(s, cfg, 0, -1);
    REQUIRE(o.visual.size() == kVisualChannels * kWindow * kWindow);
    // The agent's own cell is always floor.
    CHECK(cell(o, 0, 1, 1) == 0.0);
    CHECK(cell(o, 1, 1, 1) == 1.0);
    const bool left = cell(o, 0, 1, 0) == 1.0;
    const bool right = cell(o, 0, 1, 2) == 1.0;
    const bool above = cell(o, 0, 0, 1) == 1.0;
    const bool below = cell(o, 0, 2, 1) == 1.0;
    CHECK(left == (s.agent.x == 0));
    CHECK(right == (s.agent.x == 4));
    CHECK(above == (s.agent.y == 4));
    CHECK(below == (s.agent.y == 0));
    const int walls = left + right + above + below;
    const bool corner = (s.agent.x == 0 || s.agent.x == 4) && (s.agent.y == 0 || s.agent.y == 4);
    if (corner) CHECK(walls == 2);
    for (std::size_t k = 0; k < kWindow * kWindow; ++k) {
      CHECK(o.visual[k] + o.visual[kWindow * kWindow + k] == 1.0);
    }
  }
}

TEST_CASE("seeded episodes replay identically") {
  EnvConfig cfg;
  auto run = [&] {
    nc::Rng rng(42);
    std::vector<EnvState> trace;
    EnvState s = reset(cfg, Phase::kTrain, rng);
    for (int i = 0; i < 200; ++i) {
      const StepResult r = step(s, static_cast<Action>(rng.uniform_index(4)), cfg);
      trace.push_back(r.state);
      s = r.done ? reset(cfg, Phase::kTrain, rng, r.state.active_checkpoint) : r.state;
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("phase names round trip") {
  for (Phase p : {Phase::kPretrain, Phase::kTrain, Phase::kTestPre, Phase::kTestPost}) {
    CHECK(phase_from_string(to_string(p)) == p);
  }
  CHECK_THROWS_AS(phase_from_string("later"), ConfigError);
}
