// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_ROLLOUT_HPP_
#define REPLAYGATE_ROLLOUT_HPP_

#include <optional>

#include "replaygate/agent.hpp"
#include "replaygate/gridworld.hpp"

namespace replaygate {

enum class ActionMode : std::uint8_t { kSample, kGreedy };

/// The extra movement tick that observes where the final action of an episode
/// led. No action is taken from it.
struct ArrivalRecord {
  GridPos pos;
  Observation obs;
  nc::Tensor input;
  nc::Tensor place_field;
  nc::Tensor reward_pred;
  AgentState state_after;
  std::optional<ReplayEvent> replay;
};

/// One decision step: the movement tick, the replay it may open with, the
/// chosen action and its outcome.
struct MoveRecord {
  int episode = 0;
  int episode_step = 0;
  Phase phase = Phase::kTrain;
  GridPos pos_before;
  GridPos pos_after;
  GridPos active_checkpoint;
  Observation obs;
  int action = 0;
  double reward = 0.0;
  bool done = false;
  bool success = false;
  /// Log-probability, logits and value at the decision (after any replay).
  double log_prob = 0.0;
  double value = 0.0;
  nc::Tensor logits;
  nc::Tensor input;
  nc::Tensor place_field;
  nc::Tensor reward_pred;
  /// Agent state entering the step and leaving the movement tick (before replay).
  AgentState state_before;
  AgentState state_after;
  /// Replay opened by the reward observed at this tick, run before acting.
  std::optional<ReplayEvent> replay;
  /// Present when the episode ended with this step.
  std::optional<ArrivalRecord> arrival;

  /// Agent state once the step (including replays and arrival) is complete.
  const AgentState& final_state() const;
};

/// Drives one agent through a continuous stream of episodes. Hidden states
/// persist across episode boundaries. A positive reward opens a replay as soon
/// as the modules have observed it: before the next decision, or after the
/// arrival tick when the reward ended the episode.
/// Environment draws, action sampling and ablation noise use separate streams,
/// so changing an ablation never shifts the environment or policy draws.
class Runner {
 public:
  Runner(Agent& agent, const EnvConfig& env, Phase phase, std::uint64_t seed);
  Runner(Agent& agent, const EnvConfig& env, Phase phase, std::uint64_t seed, AgentState initial);

  /// Movement tick, replay (if the last reward is positive), action and
  /// environment step; on episode end also the arrival tick and reset.
  MoveRecord advance(ActionMode mode, const AblationSpec& ablation = {});

  /// Value estimate at the next decision, computed without advancing.
  double peek_value();

  /// Switches phase at the next episode boundary.
  void set_phase(Phase phase) { next_phase_ = phase; }
  /// Ends the current episode immediately and starts one in `phase`.
  void restart_episode(Phase phase);

  const EnvState& env_state() const noexcept { return env_; }
  const AgentState& agent_state() const noexcept { return state_; }
  int episode() const noexcept { return episode_; }
  Agent& agent() noexcept { return agent_; }
  const EnvConfig& env_config() const noexcept { return cfg_; }

 private:
  Agent& agent_;
  EnvConfig cfg_;
  nc::Rng env_rng_;
  nc::Rng policy_rng_;
  nc::Rng ablation_rng_;
  EnvState env_;
  AgentState state_;
  Phase next_phase_;
  double prev_reward_ = 0.0;
  int prev_action_ = -1;
  int episode_ = 0;
};

/// Picks an action from logits; greedy mode takes the argmax.
int select_action(std::span<const double> logits, ActionMode mode, nc::Rng& rng,
                  double* log_prob = nullptr);

}  // namespace replaygate

#endif  // REPLAYGATE_ROLLOUT_HPP_
