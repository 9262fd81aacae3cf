// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_GRIDWORLD_HPP_
#define REPLAYGATE_GRIDWORLD_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "replaygate/numcore/rng.hpp"
#include "replaygate/numcore/tensor.hpp"

namespace replaygate {

struct GridPos {
  int x = 0;
  int y = 0;
  friend bool operator==(GridPos, GridPos) = default;
  friend auto operator<=>(GridPos, GridPos) = default;
};

inline int manhattan(GridPos a, GridPos b) {
  return (a.x > b.x ? a.x - b.x : b.x - a.x) + (a.y > b.y ? a.y - b.y : b.y - a.y);
}

/// Up increases y (toward the goal side of the canonical layout).
enum class Action : std::uint8_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr std::size_t kNumActions = 4;

enum class Phase : std::uint8_t { kPretrain, kTrain, kTestPre, kTestPost };
const char* to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct EnvConfig {
  int grid_side = 5;
  GridPos start{2, 0};
  GridPos checkpoint1{1, 2};
  GridPos checkpoint2{3, 2};
  GridPos goal{2, 4};
  double small_reward = 0.5;
  double large_reward = 1.0;
  double relocation_prob = 0.1;
  int max_episode_steps = 50;

  int num_cells() const { return grid_side * grid_side; }
  bool in_bounds(GridPos p) const {
    return p.x >= 0 && p.y >= 0 && p.x < grid_side && p.y < grid_side;
  }
  int cell_index(GridPos p) const { return p.y * grid_side + p.x; }
  GridPos cell_pos(int index) const { return {index % grid_side, index / grid_side}; }
  /// Cells at least one step from every wall; nine on the canonical 5x5 arena.
  std::vector<GridPos> center_cells() const;
  /// Throws ConfigError when an invariant fails.
  void validate() const;
};

struct EnvState {
  GridPos agent;
  bool checkpoint_visited = false;
  GridPos active_checkpoint;
  int step_count = 0;
  Phase phase = Phase::kTrain;
  bool done = false;
  /// True when the reset that began this episode re-drew the checkpoint.
  bool relocated_at_reset = false;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool done = false;
  /// Episode ended at the goal after visiting the checkpoint.
  bool success = false;
};

/// Partially observable input triple. `visual` is a [channels, 3, 3] window
/// centred on the agent with channel 0 = wall and channel 1 = open floor.
/// Rewards are never rendered.
struct Observation {
  nc::Tensor visual;
  double prev_reward = 0.0;
  /// -1 at the first step of an episode, otherwise the previous Action.
  int prev_action = -1;

  std::array<double, kNumActions> prev_action_one_hot() const;
};

inline constexpr std::size_t kVisualChannels = 2;
inline constexpr std::size_t kWindow = 3;

/// Begins an episode. In Pretrain/Train the checkpoint carried over from the
/// previous episode is re-drawn uniformly from the centre cells with
/// probability relocation_prob (always drawn when there is none); TestPre pins
/// checkpoint1 and TestPost pins checkpoint2.
EnvState reset(const EnvConfig& cfg, Phase phase, nc::Rng& rng,
               std::optional<GridPos> previous_checkpoint = std::nullopt);

/// Moves with edge clamping and pays rewards. Throws ContractError after done.
StepResult step(const EnvState& state, Action action, const EnvConfig& cfg);

GridPos move(GridPos p, Action a, const EnvConfig& cfg);

Observation render_observation(const EnvState& state, const EnvConfig& cfg, double prev_reward,
                               int prev_action);

}  // namespace replaygate

#endif  // REPLAYGATE_GRIDWORLD_HPP_
