// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/rollout.hpp"

#include <cmath>

namespace replaygate {

int select_action(std::span<const double> logits, ActionMode mode, nc::Rng& rng,
                  double* log_prob) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  const int a = mode == ActionMode::kGreedy ? argmax(p) : static_cast<int>(rng.categorical(p));
  if (log_prob) *log_prob = logits[static_cast<std::size_t>(a)] - mx - std::log(z);
  return a;
}

Runner::Runner(Agent& agent, const EnvConfig& env, Phase phase, std::uint64_t seed)
    : Runner(agent, env, phase, seed, agent.initial_state()) {}

Runner::Runner(Agent& agent, const EnvConfig& env, Phase phase, std::uint64_t seed,
               AgentState initial)
    : agent_(agent),
      cfg_(env),
      env_rng_(nc::mix_seed(seed, 1)),
      policy_rng_(nc::mix_seed(seed, 2)),
      ablation_rng_(nc::mix_seed(seed, 3)),
      state_(std::move(initial)),
      next_phase_(phase) {
  cfg_.validate();
  env_ = reset(cfg_, phase, env_rng_);
}

void Runner::restart_episode(Phase phase) {
  next_phase_ = phase;
  env_ = reset(cfg_, phase, env_rng_, env_.active_checkpoint);
  prev_reward_ = 0.0;
  prev_action_ = -1;
  ++episode_;
}

const AgentState& MoveRecord::final_state() const {
  if (arrival) return arrival->replay ? arrival->replay->post_state : arrival->state_after;
  return replay ? replay->post_state : state_after;
}

double Runner::peek_value() {
  const Observation obs = render_observation(env_, cfg_, prev_reward_, prev_action_);
  const TickResult t = agent_.tick(state_, &obs);
  const std::size_t n = agent_.config().effective_replay_steps();
  if (prev_reward_ > 0.0 && n > 0) {
    nc::Rng unused(0);
    return replay_rollout(agent_, t.next, n, prev_reward_, {}, unused, cfg_).final_value;
  }
  return t.value;
}

MoveRecord Runner::advance(ActionMode mode, const AblationSpec& ablation) {
  MoveRecord rec;
  rec.episode = episode_;
  rec.episode_step = env_.step_count;
  rec.phase = env_.phase;
  rec.pos_before = env_.agent;
  rec.active_checkpoint = env_.active_checkpoint;
  rec.obs = render_observation(env_, cfg_, prev_reward_, prev_action_);
  rec.state_before = state_;

  TickResult t = agent_.tick(state_, &rec.obs);
  rec.value = t.value;
  rec.logits = std::move(t.logits);
  rec.input = std::move(t.input);
  rec.place_field = std::move(t.place_field);
  rec.reward_pred = std::move(t.reward_pred);
  state_ = std::move(t.next);
  rec.state_after = state_;

  const std::size_t n = agent_.config().effective_replay_steps();
  if (prev_reward_ > 0.0 && n > 0) {
    ReplayEvent ev = replay_rollout(agent_, state_, n, prev_reward_, ablation, ablation_rng_, cfg_);
    ev.trigger_step = rec.episode_step;
    ev.trigger_pos = env_.agent;
    state_ = ev.post_state;
    rec.logits = ev.final_logits;
    rec.value = ev.final_value;
    rec.replay = std::move(ev);
  }
  rec.action = select_action(rec.logits.span(), mode, policy_rng_, &rec.log_prob);

  const StepResult sr = step(env_, static_cast<Action>(rec.action), cfg_);
  env_ = sr.state;
  rec.pos_after = env_.agent;
  rec.reward = sr.reward;
  rec.done = sr.done;
  rec.success = sr.success;
  prev_reward_ = sr.reward;
  prev_action_ = rec.action;

  if (sr.done) {
    ArrivalRecord arr;
    arr.pos = env_.agent;
    arr.obs = render_observation(env_, cfg_, prev_reward_, prev_action_);
    TickResult at = agent_.tick(state_, &arr.obs);
    arr.input = std::move(at.input);
    arr.place_field = std::move(at.place_field);
    arr.reward_pred = std::move(at.reward_pred);
    state_ = std::move(at.next);
    arr.state_after = state_;
    if (sr.reward > 0.0 && n > 0) {
      ReplayEvent ev = replay_rollout(agent_, state_, n, sr.reward, ablation, ablation_rng_, cfg_);
      ev.trigger_step = env_.step_count;
      ev.trigger_pos = env_.agent;
      ev.terminal = true;
      state_ = ev.post_state;
      arr.replay = std::move(ev);
    }
    rec.arrival = std::move(arr);

    env_ = reset(cfg_, next_phase_, env_rng_, env_.active_checkpoint);
    prev_reward_ = 0.0;
    prev_action_ = -1;
    ++episode_;
  }
  return rec;
}

}  // namespace replaygate
