// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "replaygate/errors.hpp"
#include "replaygate/numcore/ops.hpp"

namespace replaygate {

using nc::Tape;
using nc::Tensor;
using nc::Var;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kOneStepEmission: return "one_step_emission";
    case Variant::kNoHf: return "no_HF";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "one_step_emission") return Variant::kOneStepEmission;
  if (s == "no_HF" || s == "no_hf") return Variant::kNoHf;
  throw ConfigError("unknown variant: " + s);
}

const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kNone: return "none";
    case AblationMode::kReplaceHToTheta: return "replace_h_to_theta";
    case AblationMode::kReplaceThetaToH: return "replace_theta_to_h";
    case AblationMode::kMaskLastN: return "mask_last_n";
    case AblationMode::kShuffleOrder: return "shuffle_order";
  }
  return "unknown";
}

const char* to_string(AblationFill f) {
  return f == AblationFill::kZeros ? "zeros" : "gaussian_noise";
}

AblationMode ablation_mode_from_string(const std::string& s) {
  for (auto m : {AblationMode::kNone, AblationMode::kReplaceHToTheta, AblationMode::kReplaceThetaToH,
                 AblationMode::kMaskLastN, AblationMode::kShuffleOrder}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown ablation mode: " + s);
}

AblationFill ablation_fill_from_string(const std::string& s) {
  if (s == "zeros") return AblationFill::kZeros;
  if (s == "gaussian_noise" || s == "noise") return AblationFill::kGaussianNoise;
  throw ConfigError("unknown ablation fill: " + s);
}

std::size_t AgentConfig::effective_replay_steps() const {
  switch (variant) {
    case Variant::kFull: return replay_steps;
    case Variant::kOneStepEmission: return 1;
    case Variant::kNoHf: return 0;
  }
  return replay_steps;
}

void AgentConfig::validate() const {
  if (conv_filters == 0 || embed_dim == 0 || hf_hidden == 0 || hf_input == 0 || pfc_hidden == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (!(passage_init_scale >= 0.0)) throw ConfigError("passage_init_scale must be nonnegative");
  if (replay_steps == 0 && variant != Variant::kNoHf) {
    throw ConfigError("replay_steps must be positive");
  }
}

Agent::Agent(AgentConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  nc::Rng rng(init_seed);
  const std::size_t patch = kVisualChannels * 4;
  params_.add("enc.conv.w", nc::scaled_uniform(cfg_.conv_filters, patch, rng));
  params_.add("enc.conv.b", Tensor(nc::Shape{cfg_.conv_filters}));
  params_.add("enc.fc.w", nc::scaled_uniform(cfg_.embed_dim, 4 * cfg_.conv_filters, rng));
  params_.add("enc.fc.b", Tensor(nc::Shape{cfg_.embed_dim}));

  if (cfg_.has_hf()) {
    params_.add("hf.in.w", nc::scaled_uniform(cfg_.hf_input, cfg_.input_dim(), rng));
    gru_ = nc::make_gru(params_, "hf.gru", cfg_.hf_input, cfg_.hf_hidden, rng);
    params_.add("hf.out.w",
                nc::scaled_uniform(cfg_.reward_units() + cfg_.num_cells, cfg_.hf_hidden, rng));
    params_.add("hf.out.b", Tensor(nc::Shape{cfg_.reward_units() + cfg_.num_cells}));
    Tensor to_hf = nc::scaled_uniform(cfg_.hf_input, cfg_.pfc_hidden, rng);
    Tensor to_pfc = nc::scaled_uniform(cfg_.pfc_hidden, cfg_.hf_hidden, rng);
    for (double& v : to_hf.values()) v *= cfg_.passage_init_scale;
    for (double& v : to_pfc.values()) v *= cfg_.passage_init_scale;
    params_.add("passage.to_hf.w", std::move(to_hf));
    params_.add("passage.to_pfc.w", std::move(to_pfc));
  }

  params_.add("pfc.rec.w", nc::orthogonal(cfg_.pfc_hidden, rng));
  params_.add("pfc.in.w", nc::scaled_uniform(cfg_.pfc_hidden, cfg_.input_dim(), rng));
  params_.add("pfc.b", Tensor(nc::Shape{cfg_.pfc_hidden}));
  // Small readout keeps the initial policy close to uniform.
  Tensor out_w = nc::scaled_uniform(kNumActions + 1, cfg_.pfc_hidden, rng);
  for (double& v : out_w.values()) v *= 0.01;
  params_.add("pfc.out.w", std::move(out_w));
  params_.add("pfc.out.b", Tensor(nc::Shape{kNumActions + 1}));

  // im2col for a 2x2 kernel over the 3x3 window: rows are output positions,
  // columns are (channel, ky, kx).
  for (std::size_t oy = 0; oy < 2; ++oy) {
    for (std::size_t ox = 0; ox < 2; ++ox) {
      for (std::size_t c = 0; c < kVisualChannels; ++c) {
        for (std::size_t ky = 0; ky < 2; ++ky) {
          for (std::size_t kx = 0; kx < 2; ++kx) {
            im2col_.push_back(static_cast<std::uint32_t>(c * kWindow * kWindow +
                                                         (oy + ky) * kWindow + (ox + kx)));
          }
        }
      }
    }
  }
}

Var Agent::encode(Tape& tape, const Observation& obs) {
  if (obs.visual.size() != kVisualChannels * kWindow * kWindow) {
    throw DimensionError("encode: visual tensor has wrong size " + obs.visual.shape().str());
  }
  const Var img = tape.constant(obs.visual);
  const Var patches = nc::gather(img, im2col_, nc::Shape{4, kVisualChannels * 4});
  const Var conv = nc::relu(
      nc::linear(patches, tape.param(params_.at("enc.conv.w")), tape.param(params_.at("enc.conv.b"))));
  const Var flat = nc::reshape(conv, nc::Shape{4 * cfg_.conv_filters});
  return nc::tanh(
      nc::linear(flat, tape.param(params_.at("enc.fc.w")), tape.param(params_.at("enc.fc.b"))));
}

Var Agent::input_triple(Tape& tape, Var embedding, double prev_reward, int prev_action) {
  Tensor extra(nc::Shape{1 + kNumActions});
  extra[0] = prev_reward;
  if (prev_action >= 0) extra[1 + static_cast<std::size_t>(prev_action)] = 1.0;
  const Var parts[] = {embedding, tape.constant(std::move(extra))};
  return nc::concat(parts);
}

Var Agent::message_to_pfc(Tape& tape, Var h) {
  return nc::linear(h, tape.param(params_.at("passage.to_pfc.w")));
}

Var Agent::message_to_hf(Tape& tape, Var theta) {
  return nc::linear(theta, tape.param(params_.at("passage.to_hf.w")));
}

namespace {

void check_module_input(const ModuleInput& in, const char* who) {
  if (in.external && in.message) {
    throw ContractError(std::string(who) + ": both sensory input and passage message supplied");
  }
  if (in.replay_gate && !in.message) {
    throw ContractError(std::string(who) + ": replay gate open but no passage message");
  }
  if (!in.replay_gate && !in.external) {
    throw ContractError(std::string(who) + ": replay gate closed but no sensory input");
  }
}

}  // namespace

HfVars Agent::hf_step(Tape& tape, Var h_prev, const ModuleInput& in) {
  if (!cfg_.has_hf()) throw ContractError("hf_step: agent has no HF module");
  check_module_input(in, "hf_step");
  const Var x = in.replay_gate ? *in.message
                               : nc::linear(*in.external, tape.param(params_.at("hf.in.w")));
  HfVars out;
  out.h = nc::gru_cell(x, h_prev, gru_);
  const Var read =
      nc::linear(out.h, tape.param(params_.at("hf.out.w")), tape.param(params_.at("hf.out.b")));
  out.reward = nc::sigmoid(nc::slice(read, 0, cfg_.reward_units()));
  out.place_field = nc::softmax(nc::slice(read, cfg_.reward_units(), cfg_.num_cells));
  return out;
}

PfcVars Agent::pfc_step(Tape& tape, Var theta_prev, const ModuleInput& in) {
  check_module_input(in, "pfc_step");
  const Var drive = in.replay_gate ? *in.message
                                   : nc::linear(*in.external, tape.param(params_.at("pfc.in.w")));
  const Var rec =
      nc::linear(theta_prev, tape.param(params_.at("pfc.rec.w")), tape.param(params_.at("pfc.b")));
  PfcVars out;
  out.theta = nc::tanh(nc::add(rec, drive));
  const Var read = nc::linear(out.theta, tape.param(params_.at("pfc.out.w")),
                              tape.param(params_.at("pfc.out.b")));
  out.logits = nc::slice(read, 0, kNumActions);
  out.value = nc::pick(read, kNumActions);
  return out;
}

AgentState Agent::initial_state() const {
  AgentState s;
  if (cfg_.has_hf()) s.h = Tensor(nc::Shape{cfg_.hf_hidden});
  s.theta = Tensor(nc::Shape{cfg_.pfc_hidden});
  return s;
}

TickResult Agent::tick(const AgentState& state, const Observation* obs, const Tensor* to_pfc,
                       const Tensor* to_hf) {
  Tape tape;
  TickResult r;
  r.next = state;
  const Var theta = tape.constant(state.theta);
  std::optional<Var> h;
  if (cfg_.has_hf()) h = tape.constant(state.h);

  ModuleInput hf_in;
  ModuleInput pfc_in;
  if (!state.replay_gate) {
    if (obs == nullptr) throw ContractError("tick: movement tick requires an observation");
    const Var u = input_triple(tape, encode(tape, *obs), obs->prev_reward, obs->prev_action);
    r.input = u.value();
    hf_in.external = u;
    pfc_in.external = u;
  } else {
    if (!cfg_.has_hf()) throw ContractError("tick: replay requires the HF module");
    const Var m_pfc = message_to_pfc(tape, *h);
    const Var m_hf = message_to_hf(tape, theta);
    r.msg_to_pfc = m_pfc.value();
    r.msg_to_hf = m_hf.value();
    hf_in.replay_gate = pfc_in.replay_gate = true;
    hf_in.message = to_hf ? tape.constant(*to_hf) : m_hf;
    pfc_in.message = to_pfc ? tape.constant(*to_pfc) : m_pfc;
  }

  if (cfg_.has_hf()) {
    const HfVars hv = hf_step(tape, *h, hf_in);
    r.next.h = hv.h.value();
    r.place_field = hv.place_field.value();
    r.reward_pred = hv.reward.value();
  }
  const PfcVars pv = pfc_step(tape, theta, pfc_in);
  r.next.theta = pv.theta.value();
  r.logits = pv.logits.value();
  r.value = pv.value.item();
  r.next.replay_step_index = state.replay_gate ? state.replay_step_index + 1 : 0;
  return r;
}

std::vector<nc::Param*> Agent::hf_params() {
  auto out = params_.with_prefix("enc.");
  auto hf = params_.with_prefix("hf.");
  out.insert(out.end(), hf.begin(), hf.end());
  return out;
}

std::vector<nc::Param*> Agent::trainable_rl_params() {
  auto out = params_.with_prefix("passage.");
  auto pfc = params_.with_prefix("pfc.");
  out.insert(out.end(), pfc.begin(), pfc.end());
  return out;
}

Tensor gaussian_target(GridPos pos, double sigma, const EnvConfig& env) {
  Tensor t(nc::Shape{static_cast<std::size_t>(env.num_cells())});
  if (sigma <= 0.0) {
    t[static_cast<std::size_t>(env.cell_index(pos))] = 1.0;
    return t;
  }
  double z = 0.0;
  for (int i = 0; i < env.num_cells(); ++i) {
    const GridPos c = env.cell_pos(i);
    const double dx = c.x - pos.x;
    const double dy = c.y - pos.y;
    t[static_cast<std::size_t>(i)] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    z += t[static_cast<std::size_t>(i)];
  }
  for (double& v : t.values()) v /= z;
  return t;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

namespace {

Tensor fill_message(const Tensor& like, AblationFill fill, const std::vector<double>& stds,
                    double scale, nc::Rng& rng) {
  Tensor out(like.shape());
  if (fill == AblationFill::kZeros) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = stds.size() == out.size() ? stds[i] : scale;
    out[i] = rng.normal() * s;
  }
  return out;
}

}  // namespace

ReplayEvent replay_rollout(Agent& agent, const AgentState& state, std::size_t n_steps,
                           double trigger_reward, const AblationSpec& ablation, nc::Rng& rng,
                           const EnvConfig& env) {
  if (!(trigger_reward > 0.0)) throw ContractError("replay_rollout: triggered without a reward");
  if (!agent.config().has_hf()) throw ContractError("replay_rollout: agent has no HF module");
  if (ablation.mode == AblationMode::kMaskLastN && ablation.n > n_steps) {
    throw ContractError("replay_rollout: mask_last_n exceeds replay length");
  }

  ReplayEvent ev;
  ev.n_steps = n_steps;
  ev.trigger_reward = trigger_reward;
  ev.pre_state = state;
  ev.pre_state.replay_gate = false;

  AgentState cur = state;
  cur.replay_gate = true;
  cur.replay_step_index = 0;

  // Shuffling needs the undisturbed message sequence first; the HF side then
  // replays its original trajectory while the PFC receives a permutation.
  std::vector<Tensor> orig_to_pfc;
  std::vector<Tensor> orig_to_hf;
  std::vector<std::size_t> perm;
  if (ablation.mode == AblationMode::kShuffleOrder) {
    AgentState probe = cur;
    for (std::size_t k = 0; k < n_steps; ++k) {
      TickResult t = agent.tick(probe, nullptr);
      orig_to_pfc.push_back(t.msg_to_pfc);
      orig_to_hf.push_back(t.msg_to_hf);
      probe = t.next;
    }
    perm.resize(n_steps);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n_steps; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  }

  for (std::size_t k = 0; k < n_steps; ++k) {
    std::optional<Tensor> to_pfc;
    std::optional<Tensor> to_hf;
    const Tensor* pfc_override = nullptr;
    const Tensor* hf_override = nullptr;
    switch (ablation.mode) {
      case AblationMode::kNone: break;
      case AblationMode::kReplaceHToTheta:
        to_pfc = fill_message(Tensor(nc::Shape{agent.config().pfc_hidden}), ablation.fill,
                              ablation.noise_std_to_pfc, ablation.noise_scale, rng);
        break;
      case AblationMode::kReplaceThetaToH:
        to_hf = fill_message(Tensor(nc::Shape{agent.config().hf_input}), ablation.fill,
                             ablation.noise_std_to_hf, ablation.noise_scale, rng);
        break;
      case AblationMode::kMaskLastN:
        if (k + ablation.n >= n_steps) {
          to_pfc = fill_message(Tensor(nc::Shape{agent.config().pfc_hidden}), ablation.fill,
                                ablation.noise_std_to_pfc, ablation.noise_scale, rng);
        }
        break;
      case AblationMode::kShuffleOrder:
        to_pfc = orig_to_pfc[perm[k]];
        to_hf = orig_to_hf[k];
        break;
    }
    if (to_pfc) pfc_override = &*to_pfc;
    if (to_hf) hf_override = &*to_hf;
    TickResult t = agent.tick(cur, nullptr, pfc_override, hf_override);
    ev.msgs_to_pfc.push_back(t.msg_to_pfc);
    ev.msgs_to_hf.push_back(t.msg_to_hf);
    ev.place_fields.push_back(t.place_field);
    ev.h_states.push_back(t.next.h);
    ev.theta_states.push_back(t.next.theta);
    ev.decoded_cells.push_back(env.cell_pos(argmax(t.place_field.span())));
    cur = t.next;
    ev.final_logits = std::move(t.logits);
    ev.final_value = t.value;
  }
  cur.replay_gate = false;
  cur.replay_step_index = 0;
  ev.post_state = cur;
  return ev;
}

}  // namespace replaygate
