// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/protocol.hpp"

#include <cmath>

#include "replaygate/errors.hpp"

namespace replaygate {

void TestProtocol::validate() const {
  if (pre_trials == 0 || post_trials == 0) throw ConfigError("test protocol needs pre and post trials");
}

double Session::mean_reward() const {
  double s = 0.0;
  for (const TrialRecord& t : trials) s += t.reward;
  return trials.empty() ? 0.0 : s / static_cast<double>(trials.size());
}

double Session::mean_reward(Phase phase) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const TrialRecord& t : trials) {
    if (t.phase != phase) continue;
    s += t.reward;
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

Session run_session(Agent& agent, const EnvConfig& env, const TestProtocol& protocol,
                    std::uint64_t seed, const AblationSpec& ablation) {
  protocol.validate();
  Session s;
  s.seed = seed;
  s.pre_trials = protocol.pre_trials;
  const std::size_t total = protocol.pre_trials + protocol.post_trials;
  Runner runner(agent, env, Phase::kTestPre, seed);

  TrialRecord cur;
  bool counting_exploration = false;
  while (s.trials.size() < total) {
    if (static_cast<std::size_t>(runner.episode()) + 1 >= protocol.pre_trials) {
      runner.set_phase(Phase::kTestPost);
    }
    if (cur.steps == 0) {
      cur.trial = runner.episode();
      cur.phase = runner.env_state().phase;
      cur.first_move = s.moves.size();
      if (cur.phase == Phase::kTestPost && !s.found_new_checkpoint) counting_exploration = true;
    }
    MoveRecord rec = runner.advance(protocol.action_mode, ablation);
    ++cur.steps;
    cur.reward += rec.reward;
    if (counting_exploration) {
      ++s.exploration_steps;
      if (rec.reward > 0.0 && rec.pos_after == env.checkpoint2) {
        s.found_new_checkpoint = true;
        counting_exploration = false;
      }
    }
    const bool done = rec.done;
    cur.success = rec.success;
    s.moves.push_back(std::move(rec));
    if (done) {
      s.trials.push_back(cur);
      cur = TrialRecord{};
    }
  }
  return s;
}

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe r;
  r.n = xs.size();
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
  return r;
}

}  // namespace replaygate
