// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/cli/run_config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>
#include <sstream>

#include "replaygate/errors.hpp"

namespace replaygate::cli {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

/// Reads fields of one JSON object and rejects any key it never asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  /// Throws on the first key that no getter asked for.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  void pos(const char* key, GridPos& out) {
    std::vector<int> v{out.x, out.y};
    get(key, v);
    if (v.size() != 2) throw ConfigError(where_ + "." + key + ": expected [x, y]");
    out = {v[0], v[1]};
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

ojson pos_json(GridPos p) { return ojson::array({p.x, p.y}); }

void read_env(const json& j, EnvConfig& e) {
  Fields f(j, "env");
  f.get("grid_side", e.grid_side);
  f.pos("start", e.start);
  f.pos("checkpoint1", e.checkpoint1);
  f.pos("checkpoint2", e.checkpoint2);
  f.pos("goal", e.goal);
  f.get("small_reward", e.small_reward);
  f.get("large_reward", e.large_reward);
  f.get("relocation_prob", e.relocation_prob);
  f.get("max_episode_steps", e.max_episode_steps);
  f.finish();
}

void read_model(const json& j, AgentConfig& m) {
  Fields f(j, "model");
  f.get("conv_filters", m.conv_filters);
  f.get("embed_dim", m.embed_dim);
  f.get("hf_hidden", m.hf_hidden);
  f.get("hf_input", m.hf_input);
  f.get("pfc_hidden", m.pfc_hidden);
  f.get("reward_history", m.reward_history);
  f.get("passage_init_scale", m.passage_init_scale);
  std::string variant = to_string(m.variant);
  f.get("variant", variant);
  try {
    m.variant = variant_from_string(variant);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model.variant: ") + e.what());
  }
  f.finish();
}

void read_pretrain(const json& j, PretrainConfig& p) {
  Fields f(j, "pretrain");
  f.get("sigma_loc", p.sigma_loc);
  f.get("loc_weight", p.loc_weight);
  f.get("next_reward_weight", p.next_reward_weight);
  f.get("memory_weight", p.memory_weight);
  f.get("window", p.window);
  f.get("streams", p.streams);
  f.get("max_updates", p.max_updates);
  f.get("min_updates", p.min_updates);
  f.get("eval_every", p.eval_every);
  f.get("eval_steps", p.eval_steps);
  f.get("target_accuracy", p.target_accuracy);
  f.get("failure_accuracy", p.failure_accuracy);
  f.get("lr", p.lr);
  f.get("max_grad_norm", p.max_grad_norm);
  f.finish();
}

void read_ppo(const json& j, PpoConfig& p) {
  Fields f(j, "ppo");
  f.get("clip", p.clip);
  f.get("gae_lambda", p.gae_lambda);
  f.get("gamma", p.gamma);
  f.get("entropy_coef", p.entropy_coef);
  f.get("value_coef", p.value_coef);
  f.get("lr", p.lr);
  f.get("rollout_steps", p.rollout_steps);
  f.get("num_envs", p.num_envs);
  f.get("epochs", p.epochs);
  f.get("minibatches", p.minibatches);
  f.get("max_grad_norm", p.max_grad_norm);
  f.get("total_env_steps", p.total_env_steps);
  f.get("eval_every", p.eval_every);
  f.get("eval_trials", p.eval_trials);
  f.get("bptt_across_episodes", p.bptt_across_episodes);
  f.finish();
}

void read_test(const json& j, TestBlock& t) {
  Fields f(j, "test");
  f.get("pre_trials", t.protocol.pre_trials);
  f.get("post_trials", t.protocol.post_trials);
  f.get("sessions", t.sessions);
  std::string mode = t.protocol.action_mode == ActionMode::kGreedy ? "greedy" : "sample";
  f.get("action_mode", mode);
  if (mode == "greedy") t.protocol.action_mode = ActionMode::kGreedy;
  else if (mode == "sample") t.protocol.action_mode = ActionMode::kSample;
  else throw ConfigError("test.action_mode must be 'sample' or 'greedy'");
  f.finish();
}

void read_probes(const json& j, ProbeSelection& p) {
  Fields f(j, "probes");
  f.get("contiguity", p.contiguity);
  f.get("distribution", p.distribution);
  f.get("decoders", p.decoders);
  f.get("value_maps", p.value_maps);
  f.get("manifold", p.manifold);
  f.get("sessions", p.sessions);
  f.get("ablation_sessions", p.ablation_sessions);
  f.get("scan_steps", p.scan_steps);
  f.get("manifold_repeats", p.manifold_repeats);
  f.get("knn_points", p.knn_points);
  f.get("bin_trials", p.bin_trials);
  f.get("scan_encounters", p.scan_encounters);
  f.finish();
}

}  // namespace

void RunConfig::validate() const {
  env.validate();
  model.validate();
  pretrain.validate();
  ppo.validate();
  test.protocol.validate();
  if (test.sessions == 0) throw ConfigError("test.sessions must be positive");
  if (probes.sessions < 2) throw ConfigError("probes.sessions must be at least 2");
  if (probes.ablation_sessions < 2) throw ConfigError("probes.ablation_sessions must be at least 2");
  if (probes.scan_steps == 0) throw ConfigError("probes.scan_steps must be positive");
  if (probes.bin_trials == 0) throw ConfigError("probes.bin_trials must be positive");
  if (probes.knn_points < 21) throw ConfigError("probes.knn_points must exceed the largest K (20)");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  {
    Fields f(j, "config");
    f.get("seed", c.seed);
    std::size_t replay_steps = c.model.replay_steps;
    f.get("replay_steps", replay_steps);
    std::string out = c.out_dir.string();
    f.get("out_dir", out);
    c.out_dir = out;
    if (const json* e = f.child("env")) read_env(*e, c.env);
    if (const json* m = f.child("model")) read_model(*m, c.model);
    if (const json* p = f.child("pretrain")) read_pretrain(*p, c.pretrain);
    if (const json* p = f.child("ppo")) read_ppo(*p, c.ppo);
    if (const json* t = f.child("test")) read_test(*t, c.test);
    if (const json* p = f.child("probes")) read_probes(*p, c.probes);
    f.finish();
    c.model.replay_steps = replay_steps;
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

ojson config_to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["replay_steps"] = c.model.replay_steps;
  const EnvConfig& e = c.env;
  j["env"] = ojson{{"grid_side", e.grid_side},
                   {"start", pos_json(e.start)},
                   {"checkpoint1", pos_json(e.checkpoint1)},
                   {"checkpoint2", pos_json(e.checkpoint2)},
                   {"goal", pos_json(e.goal)},
                   {"small_reward", e.small_reward},
                   {"large_reward", e.large_reward},
                   {"relocation_prob", e.relocation_prob},
                   {"max_episode_steps", e.max_episode_steps}};
  const AgentConfig& m = c.model;
  j["model"] = ojson{{"conv_filters", m.conv_filters},
                     {"embed_dim", m.embed_dim},
                     {"hf_hidden", m.hf_hidden},
                     {"hf_input", m.hf_input},
                     {"pfc_hidden", m.pfc_hidden},
                     {"reward_history", m.reward_history},
                     {"passage_init_scale", m.passage_init_scale},
                     {"variant", to_string(m.variant)}};
  const PretrainConfig& p = c.pretrain;
  j["pretrain"] = ojson{{"sigma_loc", p.sigma_loc},
                        {"loc_weight", p.loc_weight},
                        {"next_reward_weight", p.next_reward_weight},
                        {"memory_weight", p.memory_weight},
                        {"window", p.window},
                        {"streams", p.streams},
                        {"max_updates", p.max_updates},
                        {"min_updates", p.min_updates},
                        {"eval_every", p.eval_every},
                        {"eval_steps", p.eval_steps},
                        {"target_accuracy", p.target_accuracy},
                        {"failure_accuracy", p.failure_accuracy},
                        {"lr", p.lr},
                        {"max_grad_norm", p.max_grad_norm}};
  const PpoConfig& o = c.ppo;
  j["ppo"] = ojson{{"clip", o.clip},
                   {"gae_lambda", o.gae_lambda},
                   {"gamma", o.gamma},
                   {"entropy_coef", o.entropy_coef},
                   {"value_coef", o.value_coef},
                   {"lr", o.lr},
                   {"rollout_steps", o.rollout_steps},
                   {"num_envs", o.num_envs},
                   {"epochs", o.epochs},
                   {"minibatches", o.minibatches},
                   {"max_grad_norm", o.max_grad_norm},
                   {"total_env_steps", o.total_env_steps},
                   {"eval_every", o.eval_every},
                   {"eval_trials", o.eval_trials},
                   {"bptt_across_episodes", o.bptt_across_episodes}};
  j["test"] = ojson{{"pre_trials", c.test.protocol.pre_trials},
                    {"post_trials", c.test.protocol.post_trials},
                    {"sessions", c.test.sessions},
                    {"action_mode", c.test.protocol.action_mode == ActionMode::kGreedy ? "greedy" : "sample"}};
  const ProbeSelection& s = c.probes;
  j["probes"] = ojson{{"contiguity", s.contiguity},
                      {"distribution", s.distribution},
                      {"decoders", s.decoders},
                      {"value_maps", s.value_maps},
                      {"manifold", s.manifold},
                      {"sessions", s.sessions},
                      {"ablation_sessions", s.ablation_sessions},
                      {"scan_steps", s.scan_steps},
                      {"manifold_repeats", s.manifold_repeats},
                      {"knn_points", s.knn_points},
                      {"bin_trials", s.bin_trials},
                      {"scan_encounters", s.scan_encounters}};
  return j;
}

std::string config_to_string(const RunConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(config_to_string(cfg)); }

}  // namespace replaygate::cli
