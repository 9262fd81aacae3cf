// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "replaygate/cli/run_log.hpp"
#include "replaygate/errors.hpp"
#include "replaygate/numcore/checkpoint.hpp"
#include "replaygate/probes.hpp"
#include "replaygate/replay_analysis.hpp"
#include "replaygate/training.hpp"

namespace replaygate::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::size_t kFinalEvalTrials = 100;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void say(const StageOptions& opt, const std::string& msg) {
  if (opt.log) *opt.log << msg << '\n' << std::flush;
}

/// Creates the run directory and pins its config; a directory that already
/// holds a different config is refused.
void open_run(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  const std::string text = config_to_string(cfg);
  const fs::path path = out / kConfigFile;
  if (fs::exists(path) && read_file(path) != text) {
    throw ConfigError(out.string() + " already holds a run with a different config");
  }
  write_file(path, text);
}

void close_run(const RunConfig& cfg, const fs::path& out) { write_manifest(out, config_hash(cfg)); }

fs::path require(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw StageOrderError(what + " not found at " + p.string());
  return p;
}

fs::path agent_path(const StageOptions& opt) {
  return require(opt.checkpoint.value_or(opt.out / kAgentFile),
                 "trained agent checkpoint (run `train` first or pass --checkpoint)");
}

ojson mean_se_json(const MeanSe& m) { return ojson{{"mean", m.mean}, {"se", m.se}, {"n", m.n}}; }

/// NaN-safe JSON number.
ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

std::vector<double> finite(const std::vector<double>& xs) {
  std::vector<double> out;
  for (double x : xs) {
    if (std::isfinite(x)) out.push_back(x);
  }
  return out;
}

nc::CheckpointMeta meta_for(const RunConfig& cfg, const char* phase, std::uint64_t step) {
  nc::CheckpointMeta m;
  m.seed = cfg.seed;
  m.config_hash = config_hash(cfg);
  m.phase = phase;
  m.step = step;
  return m;
}

}  // namespace

std::uint64_t stream_seed(const RunConfig& cfg, Stream s, std::uint64_t index) {
  return nc::mix_seed(nc::mix_seed(cfg.seed, static_cast<std::uint64_t>(s)), index);
}

std::unique_ptr<Agent> make_agent(const RunConfig& cfg) {
  return std::make_unique<Agent>(cfg.model, stream_seed(cfg, Stream::kAgentInit));
}

std::unique_ptr<Agent> load_agent(const RunConfig& cfg, const fs::path& path) {
  auto agent = make_agent(cfg);
  nc::ParamStore loaded;
  nc::load_checkpoint(path, loaded);
  for (nc::Param* dst : agent->params().all()) {
    if (!loaded.contains(dst->name)) {
      throw ConfigError("checkpoint " + path.string() + " lacks param " + dst->name);
    }
    const nc::Param& src = loaded.at(dst->name);
    if (src.value.shape() != dst->value.shape()) {
      throw ConfigError("checkpoint param " + dst->name + " has shape " + src.value.shape().str() +
                        " but the config expects " + dst->value.shape().str());
    }
    dst->value = src.value;
    dst->frozen = true;
  }
  return agent;
}

std::unique_ptr<Agent> with_untrained_hf(const Agent& trained, const RunConfig& cfg) {
  auto out = std::make_unique<Agent>(trained.config(), stream_seed(cfg, Stream::kAgentInit));
  Agent fresh(trained.config(), stream_seed(cfg, Stream::kUntrainedHf));
  for (nc::Param* p : out->params().all()) {
    const bool hf = p->name.rfind("hf.", 0) == 0;
    p->value = hf ? fresh.params().at(p->name).value : trained.params().at(p->name).value;
    p->frozen = true;
  }
  return out;
}

std::vector<Session> simulate_sessions(Agent& agent, const RunConfig& cfg, Stream stream,
                                       std::size_t n, const AblationSpec& ablation) {
  std::vector<Session> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(run_session(agent, cfg.env, cfg.test.protocol, stream_seed(cfg, stream, i), ablation));
  }
  return out;
}

RecoveryCurve recovery_curve(const std::vector<Session>& sessions, std::size_t pre_window,
                             double fraction) {
  RecoveryCurve c;
  std::vector<double> pre;
  std::vector<std::vector<double>> post;
  for (const Session& s : sessions) {
    const std::size_t lo = s.pre_trials > pre_window ? s.pre_trials - pre_window : 0;
    for (const TrialRecord& t : s.trials) {
      const auto idx = static_cast<std::size_t>(t.trial);
      if (idx >= lo && idx < s.pre_trials) pre.push_back(t.reward);
      if (idx >= s.pre_trials) {
        const std::size_t k = idx - s.pre_trials;
        if (post.size() <= k) post.resize(k + 1);
        post[k].push_back(t.reward);
      }
    }
  }
  c.pre_level = mean_se(pre).mean;
  for (std::size_t k = 0; k < post.size(); ++k) {
    c.post.push_back(mean_se(post[k]));
    if (c.recovered_at < 0 && c.post.back().mean >= fraction * c.pre_level) {
      c.recovered_at = static_cast<int>(k);
    }
  }
  return c;
}

std::vector<double> adjacency_fractions(const std::vector<Session>& sessions) {
  std::vector<double> out;
  for (const Session& s : sessions) {
    std::size_t adj = 0;
    std::size_t total = 0;
    auto add = [&](const ReplayEvent& ev) {
      for (int d : step_distances(ev.decoded_cells)) {
        adj += d == 1;
        ++total;
      }
    };
    for (const MoveRecord& m : s.moves) {
      if (m.replay) add(*m.replay);
      if (m.arrival && m.arrival->replay) add(*m.arrival->replay);
    }
    out.push_back(total ? static_cast<double>(adj) / static_cast<double>(total) : kNan);
  }
  return out;
}

// ---- pretrain ---------------------------------------------------------------

void run_pretrain(const RunConfig& cfg, const StageOptions& opt) {
  open_run(cfg, opt.out);
  auto agent = make_agent(cfg);
  say(opt, "pretraining world model");
  const PretrainReport rep = pretrain_hf(*agent, cfg.env, cfg.pretrain, stream_seed(cfg, Stream::kPretrain));
  nc::save_checkpoint(opt.out / kWorldModelFile, agent->params(), meta_for(cfg, "world_model", rep.updates));

  Csv curve({"update", "loss", "accuracy"});
  for (const PretrainPoint& p : rep.curve) curve.cell(p.update).cell(p.loss).cell(p.accuracy).end_row();
  write_file(opt.out / "pretrain_curve.csv", curve.str());

  ojson j;
  j["updates"] = rep.updates;
  j["location_accuracy"] = rep.heldout.location_accuracy;
  j["next_reward_l1"] = rep.heldout.next_reward_l1;
  j["memory_l1"] = rep.heldout.memory_l1;
  j["max_memory_l1"] = rep.heldout.max_memory_l1();
  j["heldout_steps"] = rep.heldout.steps;
  write_json(opt.out / "pretrain.json", j);
  say(opt, "held-out location accuracy " + fmt(rep.heldout.location_accuracy) + ", max memory L1 " +
               fmt(rep.heldout.max_memory_l1()));
  close_run(cfg, opt.out);
}

// ---- train ------------------------------------------------------------------

namespace {

ojson train_and_save(const RunConfig& cfg, const StageOptions& opt, Agent& agent, const fs::path& wm,
                     const std::string& prefix, const fs::path& ckpt) {
  load_world_model(agent, wm);
  say(opt, "training " + std::string(to_string(agent.config().variant)) + " agent with PPO");
  const PpoReport rep = ppo_train(agent, cfg.env, cfg.ppo, stream_seed(cfg, Stream::kPpo), opt.out,
                                  [&](const CurvePoint& p) {
                                    say(opt, "  steps " + std::to_string(p.env_steps) + "  reward " +
                                                 fmt(p.mean_reward));
                                  });
  nc::save_checkpoint(ckpt, agent.params(), meta_for(cfg, "agent", rep.env_steps));

  Csv curve({"env_steps", "mean_reward", "success_rate"});
  std::vector<double> rewards;
  for (const CurvePoint& p : rep.curve) {
    curve.cell(static_cast<long long>(p.env_steps)).cell(p.mean_reward).cell(p.success_rate).end_row();
    rewards.push_back(p.mean_reward);
  }
  write_file(opt.out / (prefix + "training_curve.csv"), curve.str());

  const EvalMetrics ev = evaluate(agent, cfg.env, Phase::kTestPre, kFinalEvalTrials,
                                  stream_seed(cfg, Stream::kPpo, 1));
  ojson j;
  j["variant"] = to_string(agent.config().variant);
  j["env_steps"] = rep.env_steps;
  j["updates"] = rep.updates;
  j["curve_mean_reward"] = mean_se(rewards).mean;
  j["testpre_trials"] = ev.trials;
  j["testpre_mean_reward"] = ev.mean_reward;
  j["testpre_reward_se"] = ev.reward_se;
  j["testpre_success_rate"] = ev.success_rate;
  say(opt, "TestPre mean reward " + fmt(ev.mean_reward) + " over " + std::to_string(ev.trials) + " trials");
  return j;
}

}  // namespace

void run_train(const RunConfig& cfg, const StageOptions& opt) {
  const fs::path wm = require(opt.checkpoint.value_or(opt.out / kWorldModelFile),
                              "world model checkpoint (run `pretrain` first or pass --checkpoint)");
  open_run(cfg, opt.out);
  auto agent = make_agent(cfg);
  write_json(opt.out / "train.json", train_and_save(cfg, opt, *agent, wm, "", opt.out / kAgentFile));
  close_run(cfg, opt.out);
}

// ---- test -------------------------------------------------------------------

namespace {

ojson replay_json(const ReplayEvent& ev, std::size_t session, const MoveRecord& m, int post_index) {
  ojson cells = ojson::array();
  for (GridPos c : ev.decoded_cells) cells.push_back(ojson::array({c.x, c.y}));
  ojson peak = ojson::array();
  for (const nc::Tensor& pf : ev.place_fields) {
    peak.push_back(*std::max_element(pf.values().begin(), pf.values().end()));
  }
  ojson j;
  j["session"] = session;
  j["trial"] = m.episode;
  j["post_index"] = post_index;
  j["phase"] = to_string(m.phase);
  j["terminal"] = ev.terminal;
  j["trigger"] = ojson::array({ev.trigger_pos.x, ev.trigger_pos.y});
  j["reward"] = ev.trigger_reward;
  j["n_steps"] = ev.n_steps;
  j["cells"] = cells;
  j["peak_prob"] = peak;
  return j;
}

}  // namespace

void run_test(const RunConfig& cfg, const StageOptions& opt) {
  auto agent = load_agent(cfg, agent_path(opt));
  open_run(cfg, opt.out);
  say(opt, "running " + std::to_string(cfg.test.sessions) + " relocation sessions");
  const auto sessions = simulate_sessions(*agent, cfg, Stream::kTestSessions, cfg.test.sessions);

  Csv moves({"session", "trial", "phase", "step", "x", "y", "action", "next_x", "next_y", "reward",
             "done", "value", "replay_steps"});
  Csv trials({"session", "trial", "post_index", "phase", "reward", "success", "steps"});
  std::string replays;
  std::vector<double> exploration;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const Session& s = sessions[i];
    for (const MoveRecord& m : s.moves) {
      moves.cell(i).cell(m.episode).cell(to_string(m.phase)).cell(m.episode_step);
      moves.cell(m.pos_before.x).cell(m.pos_before.y).cell(m.action).cell(m.pos_after.x).cell(m.pos_after.y);
      moves.cell(m.reward).cell(m.done ? 1 : 0).cell(m.value).cell(m.replay ? m.replay->n_steps : 0);
      moves.end_row();
      const int post = s.post_index(m.episode);
      if (m.replay) replays += replay_json(*m.replay, i, m, post).dump() + "\n";
      if (m.arrival && m.arrival->replay) replays += replay_json(*m.arrival->replay, i, m, post).dump() + "\n";
    }
    for (const TrialRecord& t : s.trials) {
      trials.cell(i).cell(t.trial).cell(s.post_index(t.trial)).cell(to_string(t.phase)).cell(t.reward);
      trials.cell(t.success ? 1 : 0).cell(t.steps).end_row();
    }
    exploration.push_back(s.exploration_steps);
  }
  write_file(opt.out / "movement.csv", moves.str());
  write_file(opt.out / "trials.csv", trials.str());
  write_file(opt.out / "replays.jsonl", replays);

  const RecoveryCurve rc = recovery_curve(sessions);
  std::vector<double> pre;
  std::vector<double> post;
  for (const Session& s : sessions) {
    pre.push_back(s.mean_reward(Phase::kTestPre));
    post.push_back(s.mean_reward(Phase::kTestPost));
  }
  ojson curve = ojson::array();
  for (std::size_t k = 0; k < rc.post.size(); ++k) {
    curve.push_back(ojson{{"post_index", k}, {"mean", rc.post[k].mean}, {"se", rc.post[k].se}});
  }
  ojson j;
  j["sessions"] = sessions.size();
  j["pre_mean_reward"] = mean_se_json(mean_se(pre));
  j["post_mean_reward"] = mean_se_json(mean_se(post));
  j["pre_level"] = rc.pre_level;
  j["recovery"] = curve;
  j["recovered_at"] = rc.recovered_at;
  j["exploration_steps"] = mean_se_json(mean_se(exploration));
  write_json(opt.out / "test.json", j);
  say(opt, "pre level " + fmt(rc.pre_level) + ", recovered at post trial " + std::to_string(rc.recovered_at));
  close_run(cfg, opt.out);
}

// ---- ablate -----------------------------------------------------------------

namespace {

struct NamedSpec {
  std::string name;
  AblationSpec spec;
};

std::vector<NamedSpec> ablation_battery(std::size_t replay_steps, const MessageStats& stats) {
  std::vector<NamedSpec> out;
  out.push_back({"none", {}});
  for (AblationMode mode : {AblationMode::kReplaceHToTheta, AblationMode::kReplaceThetaToH}) {
    for (AblationFill fill : {AblationFill::kGaussianNoise, AblationFill::kZeros}) {
      AblationSpec s;
      s.mode = mode;
      s.fill = fill;
      out.push_back({std::string(to_string(mode)) + "_" + to_string(fill), with_matched_noise(s, stats)});
    }
  }
  for (std::size_t n = 0; n <= replay_steps; ++n) {
    AblationSpec s;
    s.mode = AblationMode::kMaskLastN;
    s.fill = AblationFill::kZeros;
    s.n = n;
    out.push_back({"mask_last_" + std::to_string(n), s});
  }
  AblationSpec shuffle;
  shuffle.mode = AblationMode::kShuffleOrder;
  out.push_back({"shuffle_order", shuffle});
  return out;
}

void run_battery(const RunConfig& cfg, const StageOptions& opt) {
  auto agent = load_agent(cfg, agent_path(opt));
  const std::size_t n = cfg.probes.ablation_sessions;
  const auto baseline = simulate_sessions(*agent, cfg, Stream::kAblation, n);
  const MessageStats stats = message_stats(baseline);
  Csv csv({"name", "mode", "fill", "n", "mean_reward", "se", "sessions", "exploration_mean", "exploration_se"});
  ojson results = ojson::array();
  for (const NamedSpec& ns : ablation_battery(agent->config().effective_replay_steps(), stats)) {
    const AblationResult r = ablate_and_measure(*agent, cfg.env, cfg.test.protocol, ns.spec, n,
                                                stream_seed(cfg, Stream::kAblation));
    csv.cell(ns.name).cell(to_string(ns.spec.mode)).cell(to_string(ns.spec.fill)).cell(ns.spec.n);
    csv.cell(r.reward.mean).cell(r.reward.se).cell(r.reward.n);
    csv.cell(r.exploration_steps.mean).cell(r.exploration_steps.se).end_row();
    results.push_back(ojson{{"name", ns.name},
                            {"mode", to_string(ns.spec.mode)},
                            {"fill", to_string(ns.spec.fill)},
                            {"n", ns.spec.n},
                            {"reward", mean_se_json(r.reward)},
                            {"session_rewards", r.session_rewards},
                            {"exploration_steps", mean_se_json(r.exploration_steps)}});
    say(opt, "  " + ns.name + ": " + fmt(r.reward.mean) + " +/- " + fmt(r.reward.se));
  }
  write_file(opt.out / "ablation.csv", csv.str());
  write_json(opt.out / "ablation.json", ojson{{"sessions", n}, {"results", results}});
}

void run_one_step(const RunConfig& cfg, const StageOptions& opt) {
  const fs::path wm = require(opt.checkpoint.value_or(opt.out / kWorldModelFile),
                              "world model checkpoint (run `pretrain` first or pass --checkpoint)");
  auto full = load_agent(cfg, require(opt.out / kAgentFile, "trained agent checkpoint (run `train` first)"));
  RunConfig one = cfg;
  one.model.variant = Variant::kOneStepEmission;
  auto agent = make_agent(one);
  write_json(opt.out / "one_step_train.json",
             train_and_save(one, opt, *agent, wm, "one_step_", opt.out / kOneStepAgentFile));

  const std::size_t n = cfg.probes.ablation_sessions;
  Csv csv({"model", "session", "exploration_steps", "found_new_checkpoint", "mean_reward"});
  ojson j;
  std::vector<std::vector<double>> steps(2);
  const std::pair<const char*, Agent*> models[] = {{"full", full.get()}, {"one_step_emission", agent.get()}};
  for (std::size_t m = 0; m < 2; ++m) {
    const auto sessions = simulate_sessions(*models[m].second, cfg, Stream::kAblation, n);
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      csv.cell(models[m].first).cell(i).cell(sessions[i].exploration_steps);
      csv.cell(sessions[i].found_new_checkpoint ? 1 : 0).cell(sessions[i].mean_reward()).end_row();
      steps[m].push_back(sessions[i].exploration_steps);
    }
    j[models[m].first] = mean_se_json(mean_se(steps[m]));
  }
  const MeanSe a = mean_se(steps[0]);
  const MeanSe b = mean_se(steps[1]);
  j["difference"] = b.mean - a.mean;
  j["difference_se"] = std::sqrt(a.se * a.se + b.se * b.se);
  write_file(opt.out / "exploration.csv", csv.str());
  write_json(opt.out / "one_step.json", j);
  say(opt, "exploration steps: full " + fmt(a.mean) + ", one-step " + fmt(b.mean));
}

}  // namespace

void run_ablate(const RunConfig& cfg, const StageOptions& opt) {
  if (!opt.variant.empty() && opt.variant != "battery" && opt.variant != "one_step_emission") {
    throw ConfigError("unknown ablation variant '" + opt.variant + "' (battery, one_step_emission)");
  }
  if (opt.variant == "one_step_emission") {
    require(opt.checkpoint.value_or(opt.out / kWorldModelFile),
            "world model checkpoint (run `pretrain` first or pass --checkpoint)");
    require(opt.out / kAgentFile, "trained agent checkpoint (run `train` first)");
  } else {
    agent_path(opt);
  }
  open_run(cfg, opt.out);
  if (opt.variant == "one_step_emission") {
    run_one_step(cfg, opt);
  } else {
    run_battery(cfg, opt);
  }
  close_run(cfg, opt.out);
}

// ---- probe ------------------------------------------------------------------

namespace {

void probe_contiguity(const RunConfig& cfg, Agent& agent, const std::vector<Session>& sessions,
                      const fs::path& out, ojson& summary) {
  auto untrained = with_untrained_hf(agent, cfg);
  const auto base_sessions =
      simulate_sessions(*untrained, cfg, Stream::kProbeSessions, sessions.size());
  const auto trained = adjacency_fractions(sessions);
  const auto naive = adjacency_fractions(base_sessions);
  Csv per({"session", "trained", "untrained_hf"});
  for (std::size_t i = 0; i < trained.size(); ++i) per.cell(i).cell(trained[i]).cell(naive[i]).end_row();
  write_file(out / "contiguity.csv", per.str());

  const int max_d = 2 * (cfg.env.grid_side - 1);
  auto pooled = [&](const std::vector<Session>& ss) {
    std::vector<int> d;
    for (const Session& s : ss) {
      for (const MoveRecord& m : s.moves) {
        for (const ReplayEvent* ev : {m.replay ? &*m.replay : nullptr,
                                      (m.arrival && m.arrival->replay) ? &*m.arrival->replay : nullptr}) {
          if (!ev) continue;
          for (int x : step_distances(ev->decoded_cells)) d.push_back(x);
        }
      }
    }
    return distance_histogram(d, max_d);
  };
  const auto ht = pooled(sessions);
  const auto hu = pooled(base_sessions);
  const auto uniform = uniform_pair_distance_distribution(cfg.env);
  Csv dist({"distance", "trained", "untrained_hf", "uniform"});
  for (int d = 0; d <= max_d; ++d) {
    const auto k = static_cast<std::size_t>(d);
    dist.cell(d).cell(ht[k]).cell(hu[k]).cell(uniform[k]).end_row();
  }
  write_file(out / "replay_distances.csv", dist.str());

  summary["contiguity"] = ojson{{"trained", mean_se_json(mean_se(finite(trained)))},
                                {"untrained_hf", mean_se_json(mean_se(finite(naive)))},
                                {"uniform", uniform[1]}};
}

void probe_distribution(const RunConfig& cfg, const std::vector<Session>& sessions, const fs::path& out,
                        ojson& summary) {
  const auto templates = canonical_templates(cfg.env);
  const std::size_t w = cfg.probes.bin_trials;
  const int n_bins = static_cast<int>((cfg.test.protocol.post_trials + w - 1) / w);
  std::vector<BinnedTrajectory> trajs;
  for (const Session& s : sessions) {
    for (const MoveRecord& m : s.moves) {
      const int post = s.post_index(m.episode);
      if (post < 0) continue;
      const int bin = post / static_cast<int>(w);
      if (m.replay) trajs.push_back({bin, m.replay->decoded_cells});
      if (m.arrival && m.arrival->replay) trajs.push_back({bin, m.arrival->replay->decoded_cells});
    }
  }
  const auto bins = replay_distribution(trajs, n_bins, templates);
  Csv csv({"bin", "S-C1", "C1-G", "S-C2", "C2-G", "excluded", "attributed"});
  std::vector<double> idx;
  std::vector<double> sc2;
  int peak = -1;
  double peak_value = -1.0;
  for (const DistributionBin& b : bins) {
    const auto f = b.fractions();
    csv.cell(b.bin);
    for (double v : f) csv.cell(v);
    csv.cell(b.excluded).cell(b.attributed()).end_row();
    if (b.attributed() == 0) continue;
    idx.push_back(b.bin);
    sc2.push_back(f[static_cast<std::size_t>(PathLabel::kSC2)]);
    const double c2g = f[static_cast<std::size_t>(PathLabel::kC2G)];
    if (c2g > peak_value) {
      peak_value = c2g;
      peak = b.bin;
    }
  }
  write_file(out / "replay_distribution.csv", csv.str());
  summary["distribution"] = ojson{{"bins", n_bins},
                                  {"bin_trials", w},
                                  {"spearman_sc2", spearman(idx, sc2)},
                                  {"c2g_peak_bin", peak},
                                  {"trajectories", trajs.size()}};
}

void probe_decoders(const RunConfig& cfg, const std::vector<Session>& sessions, std::size_t n_steps,
                    const fs::path& out, ojson& summary) {
  Csv csv({"target", "source", "stage", "encounter", "horizon", "accuracy", "se", "shuffled_accuracy",
           "shuffled_se", "n_train", "n_test"});
  std::uint64_t k = 0;
  ojson rl = ojson::object();
  auto row = [&](const std::string& target, const std::string& source, const std::string& stage,
                 std::size_t encounter, std::size_t horizon, const LabelledRows& d, DecoderKind kind) {
    DecodeResult r{kNan, kNan, 0, 0};
    DecodeResult sh{kNan, kNan, 0, 0};
    const std::uint64_t seed = stream_seed(cfg, Stream::kDecoders, k++);
    if (d.x.size() >= 5) {
      r = decode(d.x, d.y, kind, seed);
      sh = decode(d.x, d.y, kind, seed, true);
    }
    csv.cell(target).cell(source).cell(stage).cell(encounter).cell(horizon).cell(r.accuracy).cell(r.se);
    csv.cell(sh.accuracy).cell(sh.se).cell(r.n_train).cell(r.n_test).end_row();
    return ojson{{"accuracy", num(r.accuracy)}, {"se", num(r.se)}, {"shuffled_accuracy", num(sh.accuracy)},
                 {"shuffled_se", num(sh.se)}, {"n_test", r.n_test}};
  };
  for (StateSource src : {StateSource::kHf, StateSource::kPfc, StateSource::kPassage}) {
    ojson stages = ojson::object();
    for (std::size_t st = 0; st <= n_steps + 1; ++st) {
      if (src == StateSource::kPassage && (st == 0 || st > n_steps)) continue;
      const LabelledRows d = reward_location_dataset(sessions, cfg.env, src, st);
      stages[stage_name(st, n_steps)] =
          row("reward_location", to_string(src), stage_name(st, n_steps), 1, 0, d, DecoderKind::kGaussianNb);
    }
    rl[to_string(src)] = stages;
  }
  ojson fa = ojson::object();
  for (std::size_t enc = 1; enc <= 2; ++enc) {
    ojson hs = ojson::array();
    for (std::size_t h = 1; h <= 4; ++h) {
      const LabelledRows d = future_action_dataset(sessions, cfg.env, enc, h);
      hs.push_back(row("future_action", "PFC", "post_replay", enc, h, d, DecoderKind::kRidge));
    }
    fa["encounter_" + std::to_string(enc)] = hs;
  }
  write_file(out / "decoding.csv", csv.str());
  summary["decoding"] = ojson{{"reward_location", rl}, {"future_action", fa}};
}

void probe_value_maps(const RunConfig& cfg, Agent& agent, const std::vector<Session>& sessions,
                      const fs::path& out, ojson& summary) {
  const std::size_t n_enc = cfg.probes.scan_encounters;
  // stage 0 = before relocation, 1..n_enc = k-th replay at the new checkpoint.
  std::vector<std::vector<ValueMap>> maps(n_enc + 1);
  std::vector<std::vector<double>> dog(n_enc + 1);
  std::vector<std::vector<double>> sleg(n_enc + 1);
  std::vector<std::vector<double>> gleg(n_enc + 1);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const Session& s = sessions[i];
    std::vector<std::pair<std::size_t, const ReplayEvent*>> picks;
    const ReplayEvent* before = nullptr;
    std::size_t enc = 0;
    for (const MoveRecord& m : s.moves) {
      if (!m.replay || m.replay->terminal) continue;
      if (m.phase == Phase::kTestPre && m.replay->trigger_pos == cfg.env.checkpoint1) before = &*m.replay;
      if (m.phase == Phase::kTestPost && m.replay->trigger_pos == cfg.env.checkpoint2 && enc < n_enc) {
        picks.emplace_back(++enc, &*m.replay);
      }
    }
    if (before) picks.emplace_back(0, before);
    for (const auto& [stage, ev] : picks) {
      nc::Rng rng(stream_seed(cfg, Stream::kScans, i * 64 + stage));
      const ValueMap vm = stop_and_scan(agent, cfg.env, ev->post_state, ev->trigger_pos, rng, cfg.probes.scan_steps);
      const PathAdvantage pa = path_value_advantage(vm, cfg.env);
      dog[stage].push_back(dog_advantage(vm, cfg.env));
      sleg[stage].push_back(pa.start_leg);
      gleg[stage].push_back(pa.goal_leg);
      maps[stage].push_back(vm);
    }
  }
  auto stage_label = [](std::size_t st) { return st == 0 ? std::string("before") : "c2_visit_" + std::to_string(st); };
  Csv cells({"stage", "x", "y", "value", "visits"});
  Csv adv({"stage", "dog_mean", "dog_se", "start_leg_mean", "start_leg_se", "goal_leg_mean", "goal_leg_se", "n"});
  ojson stages = ojson::array();
  for (std::size_t st = 0; st <= n_enc; ++st) {
    if (!maps[st].empty()) {
      const ValueMap merged = merge_maps(maps[st], stage_label(st));
      for (int c = 0; c < cfg.env.num_cells(); ++c) {
        const GridPos p = cfg.env.cell_pos(c);
        const auto ci = static_cast<std::size_t>(c);
        cells.cell(stage_label(st)).cell(p.x).cell(p.y).cell(merged.value[ci]).cell(merged.visits[ci]).end_row();
      }
    }
    const MeanSe d = mean_se(dog[st]);
    const MeanSe a = mean_se(sleg[st]);
    const MeanSe g = mean_se(gleg[st]);
    adv.cell(stage_label(st)).cell(d.mean).cell(d.se).cell(a.mean).cell(a.se).cell(g.mean).cell(g.se).cell(d.n).end_row();
    stages.push_back(ojson{{"stage", stage_label(st)},
                           {"dog", mean_se_json(d)},
                           {"start_leg", mean_se_json(a)},
                           {"goal_leg", mean_se_json(g)}});
  }
  write_file(out / "value_maps.csv", cells.str());
  write_file(out / "value_advantage.csv", adv.str());
  summary["value_maps"] = stages;
}

void probe_manifold(const RunConfig& cfg, Agent& agent, const fs::path& out, ojson& summary) {
  const ManifoldStage stages[] = {ManifoldStage::kBefore, ManifoldStage::kSwitch, ManifoldStage::kAfter};
  Csv csv({"repeat", "stage", "aev_dimension", "knn20", "knn8", "n_states"});
  Csv emb({"stage", "pc1", "pc2", "pc3"});
  ojson reps = ojson::array();
  for (std::size_t r = 0; r < cfg.probes.manifold_repeats; ++r) {
    const Session s = run_session(agent, cfg.env, cfg.test.protocol, stream_seed(cfg, Stream::kManifold, r));
    std::vector<Rows> states;
    std::size_t smallest = std::numeric_limits<std::size_t>::max();
    for (ManifoldStage st : stages) {
      states.push_back(pfc_states(s, st));
      smallest = std::min(smallest, states.back().size());
    }
    const std::size_t n_eq = std::min(cfg.probes.knn_points, smallest);
    nc::Rng rng(stream_seed(cfg, Stream::kManifold, 1000 + r));
    ojson dims = ojson::array();
    ojson k20 = ojson::array();
    ojson k8 = ojson::array();
    for (std::size_t i = 0; i < 3; ++i) {
      const std::size_t dim = states[i].empty() ? 0 : pca_aev_dimension(states[i], 0.70).dimension;
      double d20 = kNan;
      double d8 = kNan;
      if (n_eq >= 21) {
        const Rows sub = subsample(states[i], n_eq, rng);
        d20 = knn_dispersion(sub, 20);
        d8 = knn_dispersion(sub, 8);
      }
      csv.cell(r).cell(to_string(stages[i])).cell(dim).cell(d20).cell(d8).cell(states[i].size()).end_row();
      dims.push_back(dim);
      k20.push_back(num(d20));
      k8.push_back(num(d8));
    }
    reps.push_back(ojson{{"aev_dimension", dims}, {"knn20", k20}, {"knn8", k8}});
    if (r == 0) {
      Rows pooled;
      std::vector<std::size_t> label;
      for (std::size_t i = 0; i < 3; ++i) {
        for (const auto& row : states[i]) {
          pooled.push_back(row);
          label.push_back(i);
        }
      }
      if (!pooled.empty()) {
        const PcaResult pr = pca_aev_dimension(pooled, 0.70);
        for (std::size_t j = 0; j < pooled.size(); ++j) {
          emb.cell(to_string(stages[label[j]])).cell(pr.embedding[j][0]).cell(pr.embedding[j][1]);
          emb.cell(pr.embedding[j][2]).end_row();
        }
      }
    }
  }
  write_file(out / "manifold.csv", csv.str());
  write_file(out / "pca_embedding.csv", emb.str());
  summary["manifold"] = reps;
}

}  // namespace

void run_probe(const RunConfig& cfg, const StageOptions& opt) {
  auto agent = load_agent(cfg, agent_path(opt));
  open_run(cfg, opt.out);
  const ProbeSelection& p = cfg.probes;
  say(opt, "simulating " + std::to_string(p.sessions) + " probe sessions");
  const auto sessions = simulate_sessions(*agent, cfg, Stream::kProbeSessions, p.sessions);
  ojson summary;
  summary["sessions"] = p.sessions;
  if (p.contiguity) {
    say(opt, "replay contiguity");
    probe_contiguity(cfg, *agent, sessions, opt.out, summary);
  }
  if (p.distribution) {
    say(opt, "replay distribution");
    probe_distribution(cfg, sessions, opt.out, summary);
  }
  if (p.decoders) {
    say(opt, "decoders");
    probe_decoders(cfg, sessions, agent->config().effective_replay_steps(), opt.out, summary);
  }
  if (p.value_maps) {
    say(opt, "value maps");
    probe_value_maps(cfg, *agent, sessions, opt.out, summary);
  }
  if (p.manifold) {
    say(opt, "manifold statistics");
    probe_manifold(cfg, *agent, opt.out, summary);
  }
  write_json(opt.out / "probe.json", summary);
  close_run(cfg, opt.out);
}

}  // namespace replaygate::cli
