// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_TRAINING_HPP_
#define REPLAYGATE_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "replaygate/agent.hpp"
#include "replaygate/gridworld.hpp"
#include "replaygate/numcore/checkpoint.hpp"
#include "replaygate/rollout.hpp"

namespace replaygate {

struct PretrainConfig {
  double sigma_loc = 0.75;
  double loc_weight = 1.0;
  double next_reward_weight = 1.0;
  double memory_weight = 1.0;
  std::size_t window = 32;
  /// Independent random-walk streams per update.
  std::size_t streams = 16;
  std::size_t max_updates = 4000;
  /// Updates performed before the accuracy gate may stop training.
  std::size_t min_updates = 0;
  std::size_t eval_every = 100;
  std::size_t eval_steps = 2000;
  double target_accuracy = 0.9;
  double failure_accuracy = 0.6;
  double lr = 1e-3;
  double max_grad_norm = 5.0;

  void validate() const;
};

/// Held-out world-model quality on a random walk.
struct WorldModelMetrics {
  double location_accuracy = 0.0;
  double next_reward_l1 = 0.0;
  /// Mean |r_hat_{t-i} - r_{t-i}| for i = 1..k.
  std::vector<double> memory_l1;
  std::size_t steps = 0;

  double max_memory_l1() const;
};

struct PretrainPoint {
  std::size_t update = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct PretrainReport {
  std::size_t updates = 0;
  WorldModelMetrics heldout;
  std::vector<PretrainPoint> curve;
};

/// Fits encoder and HF on random walks and freezes them. Throws
/// PretrainingFailure when the budget ends below the failure accuracy.
PretrainReport pretrain_hf(Agent& agent, const EnvConfig& env, const PretrainConfig& cfg,
                           std::uint64_t seed);

WorldModelMetrics evaluate_world_model(Agent& agent, const EnvConfig& env, std::size_t steps,
                                       std::uint64_t seed, std::size_t warmup = 50);

struct PpoConfig {
  double clip = 0.2;
  double gae_lambda = 0.95;
  double gamma = 0.98;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double lr = 3e-4;
  /// Decision steps per update, split evenly over the environments.
  std::size_t rollout_steps = 512;
  std::size_t num_envs = 8;
  std::size_t epochs = 4;
  std::size_t minibatches = 4;
  double max_grad_norm = 0.5;
  std::uint64_t total_env_steps = 1'000'000;
  std::uint64_t eval_every = 5000;
  std::size_t eval_trials = 50;
  /// When false, backpropagation stops at every episode boundary.
  bool bptt_across_episodes = true;

  void validate() const;
};

struct CurvePoint {
  std::uint64_t env_steps = 0;
  double mean_reward = 0.0;
  double success_rate = 0.0;
};

struct PpoReport {
  std::uint64_t env_steps = 0;
  std::size_t updates = 0;
  std::vector<CurvePoint> curve;
};

/// One decision step of a recurrent sequence as consumed by the PPO loss.
struct PpoStep {
  nc::Tensor input;
  /// HF state entering the replay that preceded the decision, when there was one.
  std::optional<nc::Tensor> replay_h;
  std::size_t replay_steps = 0;
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
  double advantage = 0.0;
  double ret = 0.0;
  /// Arrival tick closing the episode, and the HF state entering its replay.
  std::optional<nc::Tensor> arrival_input;
  std::optional<nc::Tensor> arrival_replay_h;
  std::size_t arrival_replay_steps = 0;
};

struct PpoSequence {
  nc::Tensor theta0;
  std::vector<PpoStep> steps;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// GAE over one trajectory. `dones[t]` marks terminal transitions; the value
/// after the last step is `bootstrap`.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap, double gamma,
                      double lambda);

struct PpoLossParts {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

/// Builds the clipped-surrogate loss of `seqs` on `tape`, re-running the
/// policy (and any replay segments) from the stored recurrent states.
/// Advantages are used as stored.
nc::Var ppo_loss(nc::Tape& tape, Agent& agent, std::span<const PpoSequence* const> seqs,
                 const PpoConfig& cfg, PpoLossParts* parts = nullptr);

struct EvalMetrics {
  std::size_t trials = 0;
  double mean_reward = 0.0;
  double reward_se = 0.0;
  double success_rate = 0.0;
  /// Mean steps to the first reward of an episode, over episodes with one.
  double steps_to_reward = 0.0;
  std::vector<double> episode_rewards;
};

/// Runs `n_trials` whole episodes with fixed weights.
EvalMetrics evaluate(Agent& agent, const EnvConfig& env, Phase phase, std::size_t n_trials,
                     std::uint64_t seed, ActionMode mode = ActionMode::kSample);

using PpoProgress = std::function<void(const CurvePoint&)>;

/// Trains passage and PFC parameters with encoder and HF frozen. A non-finite
/// loss writes the current parameters to `diag_dir` (when given) and throws
/// NumericalError.
PpoReport ppo_train(Agent& agent, const EnvConfig& env, const PpoConfig& cfg, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& diag_dir = std::nullopt,
                    const PpoProgress& progress = {});

/// Copies encoder (and HF, when the agent has one) params from a world-model
/// checkpoint and freezes them.
nc::CheckpointMeta load_world_model(Agent& agent, const std::filesystem::path& path);

}  // namespace replaygate

#endif  // REPLAYGATE_TRAINING_HPP_
