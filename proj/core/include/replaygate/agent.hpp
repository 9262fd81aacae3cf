// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_AGENT_HPP_
#define REPLAYGATE_AGENT_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "replaygate/gridworld.hpp"
#include "replaygate/numcore/nn.hpp"
#include "replaygate/numcore/rng.hpp"

namespace replaygate {

enum class Variant : std::uint8_t {
  kFull,
  /// Replay collapses to a single exchange.
  kOneStepEmission,
  /// Policy module alone: no world model, no passage, no replay.
  kNoHf,
};
const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct AgentConfig {
  std::size_t conv_filters = 4;
  std::size_t embed_dim = 32;
  std::size_t hf_hidden = 128;
  /// Width of the GRU input slot shared by the sensory and passage projections.
  std::size_t hf_input = 64;
  std::size_t pfc_hidden = 64;
  std::size_t reward_history = 10;
  std::size_t num_cells = 25;
  std::size_t replay_steps = 4;
  /// Multiplier on the default initial scale of both passage projections.
  double passage_init_scale = 0.1;
  Variant variant = Variant::kFull;

  bool has_hf() const { return variant != Variant::kNoHf; }
  std::size_t effective_replay_steps() const;
  /// [embedding, previous reward, previous action one-hot].
  std::size_t input_dim() const { return embed_dim + 1 + kNumActions; }
  /// Next reward, then the k remembered rewards (most recent first).
  std::size_t reward_units() const { return reward_history + 1; }
  void validate() const;
};

/// Recurrent state of both modules plus the passage gate.
struct AgentState {
  nc::Tensor h;      // empty for the no-HF variant
  nc::Tensor theta;
  bool replay_gate = false;
  int replay_step_index = 0;
};

/// Which direction(s) of the passage a replay ablation alters.
enum class AblationMode : std::uint8_t {
  kNone,
  kReplaceHToTheta,
  kReplaceThetaToH,
  kMaskLastN,
  kShuffleOrder,
};
enum class AblationFill : std::uint8_t { kGaussianNoise, kZeros };
const char* to_string(AblationMode m);
const char* to_string(AblationFill f);
AblationMode ablation_mode_from_string(const std::string& s);
AblationFill ablation_fill_from_string(const std::string& s);

struct AblationSpec {
  AblationMode mode = AblationMode::kNone;
  AblationFill fill = AblationFill::kGaussianNoise;
  /// Masked step count for kMaskLastN; 0 <= n <= replay steps.
  std::size_t n = 0;
  /// Per-dimension noise scale for each direction. When empty, noise_scale is used.
  std::vector<double> noise_std_to_pfc;
  std::vector<double> noise_std_to_hf;
  double noise_scale = 1.0;
};

/// One replay bout triggered by a reward.
struct ReplayEvent {
  int trigger_step = 0;
  GridPos trigger_pos;
  /// Replay at the end of an episode rather than before a decision.
  bool terminal = false;
  std::size_t n_steps = 0;
  double trigger_reward = 0.0;
  /// Raw messages before any ablation: W_theta,r h_{k-1} and W_h,r theta_{k-1}.
  std::vector<nc::Tensor> msgs_to_pfc;
  std::vector<nc::Tensor> msgs_to_hf;
  std::vector<nc::Tensor> place_fields;
  std::vector<nc::Tensor> h_states;
  std::vector<nc::Tensor> theta_states;
  std::vector<GridPos> decoded_cells;
  AgentState pre_state;
  AgentState post_state;
  /// Policy readout of the final replay step.
  nc::Tensor final_logits;
  double final_value = 0.0;
};

/// Result of one module tick (movement or replay) evaluated without gradients.
struct TickResult {
  AgentState next;
  nc::Tensor input;        // the triple fed to both modules; empty on replay ticks
  nc::Tensor place_field;  // softmax over cells (empty without HF)
  nc::Tensor reward_pred;  // sigmoid reward units (empty without HF)
  nc::Tensor logits;
  double value = 0.0;
  nc::Tensor msg_to_pfc;   // replay ticks only, before ablation
  nc::Tensor msg_to_hf;
};

/// Selects the input of a module tick. The gate decides which field is legal;
/// supplying the other one is a contract violation.
struct ModuleInput {
  bool replay_gate = false;
  std::optional<nc::Var> external;  // projected by W_in when the gate is closed
  std::optional<nc::Var> message;   // already projected through the passage
};

struct HfVars {
  nc::Var h;
  nc::Var place_field;
  nc::Var reward;
};

struct PfcVars {
  nc::Var theta;
  nc::Var logits;
  nc::Var value;
};

/// Encoder, world model (HF) and policy (PFC) with the reward-gated passage.
///
/// Parameter groups (name prefixes):
///   enc.       convolutional encoder
///   hf.        HF input projection, GRU core and readout
///   passage.   the two cross projections, active only while replaying
///   pfc.       recurrent policy/value network
class Agent {
 public:
  Agent(AgentConfig cfg, std::uint64_t init_seed);
  // GRU handles point into params_; map nodes survive a move but not a copy.
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;
  Agent(Agent&&) = default;
  Agent& operator=(Agent&&) = default;

  const AgentConfig& config() const noexcept { return cfg_; }
  nc::ParamStore& params() noexcept { return params_; }
  const nc::ParamStore& params() const noexcept { return params_; }

  nc::Var encode(nc::Tape& tape, const Observation& obs);
  nc::Var input_triple(nc::Tape& tape, nc::Var embedding, double prev_reward, int prev_action);
  nc::Var message_to_pfc(nc::Tape& tape, nc::Var h);
  nc::Var message_to_hf(nc::Tape& tape, nc::Var theta);
  HfVars hf_step(nc::Tape& tape, nc::Var h_prev, const ModuleInput& in);
  PfcVars pfc_step(nc::Tape& tape, nc::Var theta_prev, const ModuleInput& in);

  AgentState initial_state() const;
  /// Advances both modules once. With the gate closed `obs` is required and the
  /// modules run independently; with it open `obs` is ignored and the modules
  /// exchange messages computed from the previous hidden states. `to_pfc` /
  /// `to_hf`, when given, replace the delivered message.
  TickResult tick(const AgentState& state, const Observation* obs,
                  const nc::Tensor* to_pfc = nullptr, const nc::Tensor* to_hf = nullptr);

  std::vector<nc::Param*> hf_params();
  std::vector<nc::Param*> trainable_rl_params();

 private:
  AgentConfig cfg_;
  nc::ParamStore params_;
  nc::GruWeights gru_;
  std::vector<std::uint32_t> im2col_;
};

/// Gaussian place-field target over cells centred on `pos` with width sigma;
/// sigma <= 0 yields a one-hot.
nc::Tensor gaussian_target(GridPos pos, double sigma, const EnvConfig& env);

int argmax(std::span<const double> v);

/// Runs n replay ticks from `state` (which must follow a positive reward),
/// applying `ablation` to the delivered messages.
ReplayEvent replay_rollout(Agent& agent, const AgentState& state, std::size_t n_steps,
                           double trigger_reward, const AblationSpec& ablation, nc::Rng& rng,
                           const EnvConfig& env);

}  // namespace replaygate

#endif  // REPLAYGATE_AGENT_HPP_
