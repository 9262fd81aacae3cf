// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <numeric>

#include "replaygate/errors.hpp"
#include "replaygate/numcore/adam.hpp"
#include "replaygate/numcore/ops.hpp"

namespace replaygate {

using nc::Tape;
using nc::Tensor;
using nc::Var;

void PretrainConfig::validate() const {
  if (window == 0 || streams == 0 || max_updates == 0 || eval_every == 0 || eval_steps == 0) {
    throw ConfigError("pretrain: window, streams, max_updates, eval_every and eval_steps must be positive");
  }
  if (loc_weight < 0 || next_reward_weight < 0 || memory_weight < 0 || sigma_loc < 0) {
    throw ConfigError("pretrain: loss weights and sigma_loc must be nonnegative");
  }
  if (!(lr > 0.0) || !(max_grad_norm > 0.0)) throw ConfigError("pretrain: lr and max_grad_norm must be positive");
  if (target_accuracy < failure_accuracy) {
    throw ConfigError("pretrain: target_accuracy below failure_accuracy");
  }
}

double WorldModelMetrics::max_memory_l1() const {
  return memory_l1.empty() ? 0.0 : *std::max_element(memory_l1.begin(), memory_l1.end());
}

void PpoConfig::validate() const {
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("ppo: clip must lie in (0, 1)");
  if (gamma < 0 || gamma > 1 || gae_lambda < 0 || gae_lambda > 1) {
    throw ConfigError("ppo: gamma and gae_lambda must lie in [0, 1]");
  }
  if (entropy_coef < 0 || value_coef < 0) throw ConfigError("ppo: coefficients must be nonnegative");
  if (!(lr > 0.0) || !(max_grad_norm > 0.0)) throw ConfigError("ppo: lr and max_grad_norm must be positive");
  if (num_envs == 0 || rollout_steps == 0 || rollout_steps % num_envs != 0) {
    throw ConfigError("ppo: rollout_steps must be a positive multiple of num_envs");
  }
  if (epochs == 0 || minibatches == 0 || eval_every == 0 || eval_trials == 0) {
    throw ConfigError("ppo: epochs, minibatches, eval_every and eval_trials must be positive");
  }
}

namespace {

/// A random-walk stream with its own environment, hidden state and the
/// rewards fed to the HF at past ticks.
struct WalkStream {
  EnvState env;
  nc::Rng rng;
  double prev_reward = 0.0;
  int prev_action = -1;
  bool arrival_pending = false;
  Tensor h;
  std::deque<double> inputs;  // most recent first
};

/// One HF tick with its targets.
struct WalkSample {
  Observation obs;
  GridPos pos;
  /// Reward produced by the action taken after this tick (0 on arrival ticks).
  double reward = 0.0;
  /// Reward inputs r_{t-1} .. r_{t-k}.
  Tensor memory;
};

WalkStream make_stream(const EnvConfig& env, std::uint64_t seed, std::size_t hidden) {
  WalkStream s{EnvState{}, nc::Rng(seed), 0.0, -1, false, Tensor(nc::Shape{hidden}), {}};
  s.env = reset(env, Phase::kPretrain, s.rng);
  return s;
}

// Mirrors the Runner's tick order: every transition is observed, including
// the one that ends an episode, before the reset.
WalkSample advance_walk(WalkStream& s, const EnvConfig& env, std::size_t k) {
  WalkSample w;
  w.obs = render_observation(s.env, env, s.prev_reward, s.prev_action);
  w.pos = s.env.agent;
  s.inputs.push_front(s.prev_reward);
  if (s.inputs.size() > k) s.inputs.pop_back();
  w.memory = Tensor(nc::Shape{k});
  for (std::size_t i = 0; i < s.inputs.size(); ++i) w.memory[i] = s.inputs[i];

  if (s.arrival_pending) {
    s.arrival_pending = false;
    s.env = reset(env, Phase::kPretrain, s.rng, s.env.active_checkpoint);
    s.prev_reward = 0.0;
    s.prev_action = -1;
    return w;
  }
  const int a = static_cast<int>(s.rng.uniform_index(kNumActions));
  const StepResult sr = step(s.env, static_cast<Action>(a), env);
  w.reward = sr.reward;
  s.prev_reward = sr.reward;
  s.prev_action = a;
  s.env = sr.state;
  s.arrival_pending = sr.done;
  return w;
}

HfVars hf_forward(Agent& agent, Tape& tape, Var h, const Observation& obs) {
  ModuleInput in;
  in.external = agent.input_triple(tape, agent.encode(tape, obs), obs.prev_reward, obs.prev_action);
  return agent.hf_step(tape, h, in);
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

WorldModelMetrics evaluate_world_model(Agent& agent, const EnvConfig& env, std::size_t steps,
                                       std::uint64_t seed, std::size_t warmup) {
  const std::size_t k = agent.config().reward_history;
  WalkStream s = make_stream(env, seed, agent.config().hf_hidden);
  WorldModelMetrics m;
  m.memory_l1.assign(k, 0.0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < warmup + steps; ++i) {
    const WalkSample w = advance_walk(s, env, k);
    Tape tape;
    const HfVars hv = hf_forward(agent, tape, tape.constant(s.h), w.obs);
    s.h = hv.h.value();
    if (i < warmup) continue;
    const Tensor& pf = hv.place_field.value();
    const Tensor& r = hv.reward.value();
    if (argmax(pf.span()) == env.cell_index(w.pos)) ++hits;
    m.next_reward_l1 += std::fabs(r[0] - w.reward);
    for (std::size_t j = 0; j < k; ++j) m.memory_l1[j] += std::fabs(r[j + 1] - w.memory[j]);
  }
  m.steps = steps;
  const double n = static_cast<double>(steps);
  m.location_accuracy = static_cast<double>(hits) / n;
  m.next_reward_l1 /= n;
  for (double& v : m.memory_l1) v /= n;
  return m;
}

PretrainReport pretrain_hf(Agent& agent, const EnvConfig& env, const PretrainConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  if (!agent.config().has_hf()) throw ContractError("pretrain_hf: agent has no HF module");
  const std::size_t k = agent.config().reward_history;
  auto params = agent.hf_params();
  for (nc::Param* p : params) p->frozen = false;

  std::vector<Tensor> targets;
  for (int c = 0; c < env.num_cells(); ++c) {
    targets.push_back(gaussian_target(env.cell_pos(c), cfg.sigma_loc, env));
  }
  std::vector<WalkStream> streams;
  for (std::size_t i = 0; i < cfg.streams; ++i) {
    streams.push_back(make_stream(env, nc::mix_seed(seed, 10 + i), agent.config().hf_hidden));
  }
  const std::uint64_t heldout_seed = nc::mix_seed(seed, 9001);

  nc::Adam opt(nc::AdamConfig{.lr = cfg.lr});
  PretrainReport report;
  for (std::size_t update = 1; update <= cfg.max_updates; ++update) {
    Tape tape;
    std::optional<Var> total;
    for (WalkStream& s : streams) {
      Var h = tape.constant(s.h);
      for (std::size_t t = 0; t < cfg.window; ++t) {
        const WalkSample w = advance_walk(s, env, k);
        const HfVars hv = hf_forward(agent, tape, h, w.obs);
        Var term = nc::scale(
            nc::cross_entropy(targets[static_cast<std::size_t>(env.cell_index(w.pos))], hv.place_field),
            cfg.loc_weight);
        term = nc::add(term, nc::scale(nc::l1(nc::slice(hv.reward, 0, 1),
                                              tape.constant(Tensor::vector({w.reward}))),
                                       cfg.next_reward_weight));
        term = nc::add(term, nc::scale(nc::l1(nc::slice(hv.reward, 1, k), tape.constant(w.memory)),
                                       cfg.memory_weight));
        total = total ? nc::add(*total, term) : term;
        h = hv.h;
      }
      s.h = h.value();
    }
    const Var loss = nc::scale(*total, 1.0 / static_cast<double>(cfg.streams * cfg.window));
    if (!std::isfinite(loss.item())) {
      throw NumericalError("pretrain_hf: non-finite loss at update " + std::to_string(update));
    }
    tape.backward(loss);
    nc::clip_grad_norm(params, cfg.max_grad_norm);
    opt.step(params);
    report.updates = update;

    if (update % cfg.eval_every == 0 || update == cfg.max_updates) {
      report.heldout = evaluate_world_model(agent, env, cfg.eval_steps, heldout_seed);
      report.curve.push_back({update, loss.item(), report.heldout.location_accuracy});
      if (report.heldout.location_accuracy >= cfg.target_accuracy && update >= cfg.min_updates) {
        break;
      }
    }
  }
  if (report.heldout.location_accuracy < cfg.failure_accuracy) {
    throw PretrainingFailure("pretrain_hf: held-out accuracy " +
                             std::to_string(report.heldout.location_accuracy) + " after " +
                             std::to_string(report.updates) + " updates");
  }
  for (nc::Param* p : params) p->frozen = true;
  return report;
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<bool>& dones, double bootstrap, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw DimensionError("compute_gae: rewards, values and dones differ in length");
  }
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_value = bootstrap;
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    running = delta + gamma * lambda * live * running;
    out.advantages[i] = running;
    out.returns[i] = running + values[i];
    next_value = values[i];
  }
  return out;
}

namespace {

/// Replay segment from a stored HF state; returns the final policy readout.
PfcVars replay_segment(Tape& tape, Agent& agent, const Tensor& h0, Var& theta, std::size_t n) {
  Var h = tape.constant(h0);
  std::optional<PfcVars> last;
  for (std::size_t k = 0; k < n; ++k) {
    ModuleInput pin;
    pin.replay_gate = true;
    pin.message = agent.message_to_pfc(tape, h);
    if (k + 1 < n) {
      ModuleInput hin;
      hin.replay_gate = true;
      hin.message = agent.message_to_hf(tape, theta);
      h = agent.hf_step(tape, h, hin).h;
    }
    last = agent.pfc_step(tape, theta, pin);
    theta = last->theta;
  }
  return *last;
}

}  // namespace

Var ppo_loss(Tape& tape, Agent& agent, std::span<const PpoSequence* const> seqs,
             const PpoConfig& cfg, PpoLossParts* parts) {
  std::optional<Var> total;
  std::size_t count = 0;
  PpoLossParts acc;
  for (const PpoSequence* seq : seqs) {
    Var theta = tape.constant(seq->theta0);
    for (const PpoStep& st : seq->steps) {
      ModuleInput in;
      in.external = tape.constant(st.input);
      PfcVars pv = agent.pfc_step(tape, theta, in);
      theta = pv.theta;
      if (st.replay_h && st.replay_steps > 0) {
        pv = replay_segment(tape, agent, *st.replay_h, theta, st.replay_steps);
      }
      const Var logp_all = nc::log_softmax(pv.logits);
      const Var ratio =
          nc::exp(nc::add_scalar(nc::pick(logp_all, static_cast<std::size_t>(st.action)), -st.log_prob));
      const Var surr = nc::minimum(nc::scale(ratio, st.advantage),
                                   nc::scale(nc::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), st.advantage));
      const Var value_err = nc::scale(nc::square(nc::add_scalar(pv.value, -st.ret)), 0.5);
      const Var entropy = nc::scale(nc::sum(nc::mul(nc::exp(logp_all), logp_all)), -1.0);
      const Var term = nc::add(nc::add(nc::scale(surr, -1.0), nc::scale(value_err, cfg.value_coef)),
                               nc::scale(entropy, -cfg.entropy_coef));
      acc.policy -= surr.item();
      acc.value += value_err.item();
      acc.entropy += entropy.item();
      total = total ? nc::add(*total, term) : term;
      ++count;

      if (st.arrival_input) {
        ModuleInput ain;
        ain.external = tape.constant(*st.arrival_input);
        theta = agent.pfc_step(tape, theta, ain).theta;
        if (st.arrival_replay_h && st.arrival_replay_steps > 0) {
          replay_segment(tape, agent, *st.arrival_replay_h, theta, st.arrival_replay_steps);
        }
      }
    }
  }
  if (!total) throw ContractError("ppo_loss: empty batch");
  const double inv = 1.0 / static_cast<double>(count);
  const Var loss = nc::scale(*total, inv);
  if (parts) {
    parts->policy = acc.policy * inv;
    parts->value = acc.value * inv;
    parts->entropy = acc.entropy * inv;
    parts->total = loss.item();
  }
  return loss;
}

EvalMetrics evaluate(Agent& agent, const EnvConfig& env, Phase phase, std::size_t n_trials,
                     std::uint64_t seed, ActionMode mode) {
  Runner runner(agent, env, phase, seed);
  EvalMetrics m;
  m.trials = n_trials;
  double episode_reward = 0.0;
  int first_reward_step = -1;
  std::size_t successes = 0;
  double steps_sum = 0.0;
  std::size_t steps_n = 0;
  while (m.episode_rewards.size() < n_trials) {
    const MoveRecord rec = runner.advance(mode);
    episode_reward += rec.reward;
    if (rec.reward > 0.0 && first_reward_step < 0) first_reward_step = rec.episode_step + 1;
    if (!rec.done) continue;
    m.episode_rewards.push_back(episode_reward);
    if (rec.success) ++successes;
    if (first_reward_step >= 0) {
      steps_sum += first_reward_step;
      ++steps_n;
    }
    episode_reward = 0.0;
    first_reward_step = -1;
  }
  const double n = static_cast<double>(n_trials);
  m.mean_reward = std::accumulate(m.episode_rewards.begin(), m.episode_rewards.end(), 0.0) / n;
  if (n_trials > 1) {
    double ss = 0.0;
    for (double r : m.episode_rewards) ss += (r - m.mean_reward) * (r - m.mean_reward);
    m.reward_se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  m.success_rate = static_cast<double>(successes) / n;
  m.steps_to_reward = steps_n ? steps_sum / static_cast<double>(steps_n) : 0.0;
  return m;
}

namespace {

void dump_diagnostics(Agent& agent, const std::optional<std::filesystem::path>& dir,
                      std::uint64_t seed, std::uint64_t env_steps) {
  if (!dir) return;
  std::filesystem::create_directories(*dir);
  nc::CheckpointMeta meta;
  meta.seed = seed;
  meta.phase = "nan_dump";
  meta.step = env_steps;
  nc::save_checkpoint(*dir / "nan_dump.json", agent.params(), meta);
}

}  // namespace

PpoReport ppo_train(Agent& agent, const EnvConfig& env, const PpoConfig& cfg, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& diag_dir,
                    const PpoProgress& progress) {
  cfg.validate();
  for (nc::Param* p : agent.params().all()) {
    p->frozen = !(starts_with(p->name, "passage.") || starts_with(p->name, "pfc."));
  }
  auto trainable = agent.trainable_rl_params();
  nc::Adam opt(nc::AdamConfig{.lr = cfg.lr});
  nc::Rng shuffle_rng(nc::mix_seed(seed, 7));

  std::vector<std::unique_ptr<Runner>> runners;
  for (std::size_t i = 0; i < cfg.num_envs; ++i) {
    runners.push_back(std::make_unique<Runner>(agent, env, Phase::kTrain, nc::mix_seed(seed, 100 + i)));
  }
  const std::size_t per_env = cfg.rollout_steps / cfg.num_envs;

  PpoReport report;
  std::uint64_t next_eval = 0;
  std::uint64_t eval_index = 0;
  auto maybe_evaluate = [&] {
    while (report.env_steps >= next_eval) {
      const EvalMetrics m = evaluate(agent, env, Phase::kTrain, cfg.eval_trials,
                                     nc::mix_seed(seed, 1000 + eval_index++));
      const CurvePoint pt{next_eval, m.mean_reward, m.success_rate};
      report.curve.push_back(pt);
      if (progress) progress(pt);
      next_eval += cfg.eval_every;
    }
  };
  maybe_evaluate();

  while (report.env_steps < cfg.total_env_steps) {
    std::vector<PpoSequence> seqs;
    std::vector<PpoStep*> all_steps;
    for (auto& runner : runners) {
      PpoSequence seq;
      seq.theta0 = runner->agent_state().theta;
      std::vector<double> rewards;
      std::vector<double> values;
      std::vector<bool> dones;
      std::vector<nc::Tensor> thetas;
      for (std::size_t t = 0; t < per_env; ++t) {
        MoveRecord rec = runner->advance(ActionMode::kSample);
        PpoStep st;
        st.input = std::move(rec.input);
        st.action = rec.action;
        st.log_prob = rec.log_prob;
        st.value = rec.value;
        st.reward = rec.reward;
        st.done = rec.done;
        if (rec.replay) {
          st.replay_h = rec.replay->pre_state.h;
          st.replay_steps = rec.replay->n_steps;
        }
        if (rec.arrival) {
          st.arrival_input = std::move(rec.arrival->input);
          if (rec.arrival->replay) {
            st.arrival_replay_h = rec.arrival->replay->pre_state.h;
            st.arrival_replay_steps = rec.arrival->replay->n_steps;
          }
        }
        rewards.push_back(st.reward);
        values.push_back(st.value);
        dones.push_back(st.done);
        thetas.push_back(std::move(rec.state_before.theta));
        seq.steps.push_back(std::move(st));
        ++report.env_steps;
      }
      const double bootstrap = dones.back() ? 0.0 : runner->peek_value();
      const GaeResult gae = compute_gae(rewards, values, dones, bootstrap, cfg.gamma, cfg.gae_lambda);
      for (std::size_t t = 0; t < per_env; ++t) {
        seq.steps[t].advantage = gae.advantages[t];
        seq.steps[t].ret = gae.returns[t];
      }
      if (cfg.bptt_across_episodes) {
        seqs.push_back(std::move(seq));
        continue;
      }
      PpoSequence cur;
      cur.theta0 = thetas[0];
      for (std::size_t t = 0; t < per_env; ++t) {
        if (cur.steps.empty()) cur.theta0 = thetas[t];
        cur.steps.push_back(std::move(seq.steps[t]));
        if (cur.steps.back().done) {
          seqs.push_back(std::move(cur));
          cur = PpoSequence{};
        }
      }
      if (!cur.steps.empty()) seqs.push_back(std::move(cur));
    }

    double mean = 0.0;
    std::size_t n = 0;
    for (auto& s : seqs) {
      for (auto& st : s.steps) {
        mean += st.advantage;
        ++n;
      }
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (auto& s : seqs) {
      for (auto& st : s.steps) var += (st.advantage - mean) * (st.advantage - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(n)) + 1e-8;
    for (auto& s : seqs) {
      for (auto& st : s.steps) st.advantage = (st.advantage - mean) / sd;
    }

    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n_mb = std::min(cfg.minibatches, seqs.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
      }
      for (std::size_t mb = 0; mb < n_mb; ++mb) {
        std::vector<const PpoSequence*> batch;
        for (std::size_t j = mb; j < order.size(); j += n_mb) batch.push_back(&seqs[order[j]]);
        Tape tape(true);
        const Var loss = ppo_loss(tape, agent, batch, cfg);
        if (!std::isfinite(loss.item())) {
          dump_diagnostics(agent, diag_dir, seed, report.env_steps);
          throw NumericalError("ppo_train: non-finite loss after " +
                               std::to_string(report.env_steps) + " env steps");
        }
        tape.backward(loss);
        nc::clip_grad_norm(trainable, cfg.max_grad_norm);
        opt.step(trainable);
      }
    }
    ++report.updates;
    maybe_evaluate();
  }
  return report;
}

nc::CheckpointMeta load_world_model(Agent& agent, const std::filesystem::path& path) {
  nc::ParamStore loaded;
  const nc::CheckpointMeta meta = nc::load_checkpoint(path, loaded);
  const bool want_hf = agent.config().has_hf();
  std::size_t hf_count = 0;
  for (nc::Param* src : loaded.all()) {
    const bool enc = starts_with(src->name, "enc.");
    const bool hf = starts_with(src->name, "hf.");
    if (!(enc || (hf && want_hf))) continue;
    if (!agent.params().contains(src->name)) {
      throw ConfigError("world model checkpoint has unexpected param " + src->name);
    }
    nc::Param& dst = agent.params().at(src->name);
    if (dst.value.shape() != src->value.shape()) {
      throw DimensionError("world model param " + src->name + " has shape " +
                           src->value.shape().str() + ", expected " + dst.value.shape().str());
    }
    dst.value = src->value;
    dst.frozen = true;
    if (hf) ++hf_count;
  }
  if (want_hf && hf_count == 0) throw ConfigError("checkpoint holds no HF params: " + path.string());
  return meta;
}

}  // namespace replaygate
