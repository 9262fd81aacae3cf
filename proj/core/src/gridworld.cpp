// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/gridworld.hpp"

#include <algorithm>

#include "replaygate/errors.hpp"

namespace replaygate {

const char* to_string(Phase p) {
  switch (p) {
    case Phase::kPretrain: return "pretrain";
    case Phase::kTrain: return "train";
    case Phase::kTestPre: return "test_pre";
    case Phase::kTestPost: return "test_post";
  }
  return "unknown";
}

Phase phase_from_string(const std::string& s) {
  if (s == "pretrain") return Phase::kPretrain;
  if (s == "train") return Phase::kTrain;
  if (s == "test_pre") return Phase::kTestPre;
  if (s == "test_post") return Phase::kTestPost;
  throw ConfigError("unknown phase: " + s);
}

std::vector<GridPos> EnvConfig::center_cells() const {
  std::vector<GridPos> out;
  for (int y = 1; y < grid_side - 1; ++y) {
    for (int x = 1; x < grid_side - 1; ++x) out.push_back({x, y});
  }
  return out;
}

void EnvConfig::validate() const {
  if (grid_side < 3) throw ConfigError("grid_side must be at least 3");
  for (GridPos p : {start, checkpoint1, checkpoint2, goal}) {
    if (!in_bounds(p)) throw ConfigError("environment landmark out of bounds");
  }
  const auto centre = center_cells();
  for (GridPos c : {checkpoint1, checkpoint2}) {
    if (std::find(centre.begin(), centre.end(), c) == centre.end()) {
      throw ConfigError("checkpoints must lie in the centre cells");
    }
  }
  if (start == goal) throw ConfigError("start and goal must differ");
  if (small_reward < 0 || large_reward < 0) throw ConfigError("rewards must be nonnegative");
  if (relocation_prob < 0 || relocation_prob > 1) {
    throw ConfigError("relocation_prob must lie in [0, 1]");
  }
  if (max_episode_steps < 1) throw ConfigError("max_episode_steps must be positive");
}

std::array<double, kNumActions> Observation::prev_action_one_hot() const {
  std::array<double, kNumActions> v{};
  if (prev_action >= 0) v[static_cast<std::size_t>(prev_action)] = 1.0;
  return v;
}

EnvState reset(const EnvConfig& cfg, Phase phase, nc::Rng& rng,
               std::optional<GridPos> previous_checkpoint) {
  EnvState s;
  s.agent = cfg.start;
  s.phase = phase;
  switch (phase) {
    case Phase::kTestPre:
      s.active_checkpoint = cfg.checkpoint1;
      break;
    case Phase::kTestPost:
      s.active_checkpoint = cfg.checkpoint2;
      break;
    case Phase::kPretrain:
    case Phase::kTrain: {
      // Draw order is fixed (bernoulli first) so seeded streams stay aligned.
      const bool redraw = rng.bernoulli(cfg.relocation_prob) || !previous_checkpoint.has_value();
      if (redraw) {
        const auto centre = cfg.center_cells();
        s.active_checkpoint = centre[rng.uniform_index(centre.size())];
        s.relocated_at_reset = previous_checkpoint.has_value();
      } else {
        s.active_checkpoint = *previous_checkpoint;
      }
      break;
    }
  }
  return s;
}

GridPos move(GridPos p, Action a, const EnvConfig& cfg) {
  switch (a) {
    case Action::kUp: p.y += 1; break;
    case Action::kDown: p.y -= 1; break;
    case Action::kLeft: p.x -= 1; break;
    case Action::kRight: p.x += 1; break;
  }
  p.x = std::clamp(p.x, 0, cfg.grid_side - 1);
  p.y = std::clamp(p.y, 0, cfg.grid_side - 1);
  return p;
}

StepResult step(const EnvState& state, Action action, const EnvConfig& cfg) {
  if (state.done) throw ContractError("step called on a finished episode");
  StepResult r;
  r.state = state;
  EnvState& s = r.state;
  s.agent = move(s.agent, action, cfg);
  s.step_count += 1;
  if (s.agent == s.active_checkpoint && !s.checkpoint_visited) {
    s.checkpoint_visited = true;
    r.reward = cfg.small_reward;
  } else if (s.agent == cfg.goal && s.checkpoint_visited) {
    r.reward = cfg.large_reward;
    r.success = true;
    s.done = true;
  }
  if (s.step_count >= cfg.max_episode_steps) s.done = true;
  r.done = s.done;
  return r;
}

Observation render_observation(const EnvState& state, const EnvConfig& cfg, double prev_reward,
                               int prev_action) {
  Observation obs;
  obs.visual = nc::Tensor(nc::Shape{kVisualChannels, kWindow, kWindow});
  // Row 0 of the window is the row above the agent.
  for (std::size_t r = 0; r < kWindow; ++r) {
    for (std::size_t c = 0; c < kWindow; ++c) {
      const GridPos p{state.agent.x + static_cast<int>(c) - 1,
                      state.agent.y + 1 - static_cast<int>(r)};
      const bool wall = !cfg.in_bounds(p);
      obs.visual[0 * kWindow * kWindow + r * kWindow + c] = wall ? 1.0 : 0.0;
      obs.visual[1 * kWindow * kWindow + r * kWindow + c] = wall ? 0.0 : 1.0;
    }
  }
  obs.prev_reward = prev_reward;
  obs.prev_action = prev_action;
  return obs;
}

}  // namespace replaygate
