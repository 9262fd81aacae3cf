// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_PROTOCOL_HPP_
#define REPLAYGATE_PROTOCOL_HPP_

#include <cstdint>
#include <vector>

#include "replaygate/agent.hpp"
#include "replaygate/rollout.hpp"

namespace replaygate {

/// Relocation test: TestPre trials with the checkpoint at C1, then TestPost
/// trials at C2, weights fixed and hidden states carried throughout.
struct TestProtocol {
  std::size_t pre_trials = 20;
  std::size_t post_trials = 20;
  ActionMode action_mode = ActionMode::kSample;

  void validate() const;
};

struct TrialRecord {
  int trial = 0;
  Phase phase = Phase::kTestPre;
  double reward = 0.0;
  bool success = false;
  int steps = 0;
  /// Index (within the session's moves) of the trial's first move.
  std::size_t first_move = 0;
};

struct Session {
  std::uint64_t seed = 0;
  std::size_t pre_trials = 0;
  std::vector<MoveRecord> moves;
  std::vector<TrialRecord> trials;
  /// Movement steps from the first post-relocation start until the first
  /// reward at the new checkpoint; every post step when it is never reached.
  int exploration_steps = 0;
  bool found_new_checkpoint = false;

  /// Trial index relative to the relocation (0 = first post trial), or -1.
  int post_index(int trial) const { return trial - static_cast<int>(pre_trials); }
  double mean_reward() const;
  double mean_reward(Phase phase) const;
};

Session run_session(Agent& agent, const EnvConfig& env, const TestProtocol& protocol,
                    std::uint64_t seed, const AblationSpec& ablation = {});

/// Mean and standard error of `xs` (SE is 0 for fewer than two values).
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};
MeanSe mean_se(const std::vector<double>& xs);

}  // namespace replaygate

#endif  // REPLAYGATE_PROTOCOL_HPP_
