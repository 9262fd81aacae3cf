// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_PROBES_HPP_
#define REPLAYGATE_PROBES_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "replaygate/agent.hpp"
#include "replaygate/protocol.hpp"

namespace replaygate {

using Rows = std::vector<std::vector<double>>;

// ---- message ablations ----------------------------------------------------

/// Per-dimension standard deviation of the recorded (unablated) messages.
struct MessageStats {
  std::vector<double> std_to_pfc;
  std::vector<double> std_to_hf;
};
MessageStats message_stats(const std::vector<Session>& sessions);

/// Copies `spec`, attaching variance-matched noise scales.
AblationSpec with_matched_noise(AblationSpec spec, const MessageStats& stats);

struct AblationResult {
  MeanSe reward;
  MeanSe exploration_steps;
  std::vector<double> session_rewards;
};

/// Runs `n_sessions` test sessions (seeds derived from `seed`, identical for
/// every spec) and reports the per-session mean episode reward.
AblationResult ablate_and_measure(Agent& agent, const EnvConfig& env, const TestProtocol& protocol,
                                  const AblationSpec& spec, std::size_t n_sessions,
                                  std::uint64_t seed);

// ---- decoders -------------------------------------------------------------

/// Per-feature class-conditional normals with priors from training frequencies.
class GaussianNb {
 public:
  explicit GaussianNb(double var_floor = 1e-9) : var_floor_(var_floor) {}
  void fit(const Rows& x, const std::vector<int>& y);
  int predict(const std::vector<double>& x) const;

 private:
  double var_floor_;
  std::vector<int> classes_;
  std::vector<double> log_prior_;
  Rows mean_;
  Rows var_;
};

/// One-vs-rest ridge regression onto +/-1 targets with an unpenalised intercept.
class RidgeClassifier {
 public:
  explicit RidgeClassifier(double lambda = 1.0) : lambda_(lambda) {}
  void fit(const Rows& x, const std::vector<int>& y);
  int predict(const std::vector<double>& x) const;

 private:
  double lambda_;
  std::vector<int> classes_;
  Rows weights_;  // one row per class, intercept last
};

enum class DecoderKind : std::uint8_t { kGaussianNb, kRidge };

struct DecodeResult {
  double accuracy = 0.0;
  /// Binomial standard error of the held-out accuracy.
  double se = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double error() const { return 1.0 - accuracy; }
};

/// 80/20 split (re-drawn stratified when a class is missing from training),
/// fit, and score on the held-out part. `shuffle_labels` permutes labels
/// before splitting as a null control.
DecodeResult decode(const Rows& x, const std::vector<int>& y, DecoderKind kind, std::uint64_t seed,
                    bool shuffle_labels = false, double train_fraction = 0.8);

enum class StateSource : std::uint8_t { kHf, kPfc, kPassage };
const char* to_string(StateSource s);

/// Stage 0 is the state before replay, 1..n the replay steps, n+1 the state after.
std::string stage_name(std::size_t stage, std::size_t n_steps);

struct LabelledRows {
  Rows x;
  std::vector<int> y;
};

/// Checkpoint replays labelled by reward location: the last one before the
/// relocation (label 0) and the first at the new checkpoint (label 1) of each
/// session. The passage source has replay stages only.
LabelledRows reward_location_dataset(const std::vector<Session>& sessions, const EnvConfig& env,
                                     StateSource source, std::size_t stage);

/// Post-replay PFC states at the k-th (1-based) arrival at the new checkpoint,
/// paired with the action taken `horizon` decisions later (1 = the next action).
/// The hidden state persists across episodes, so the horizon may run into the
/// next trial.
LabelledRows future_action_dataset(const std::vector<Session>& sessions, const EnvConfig& env,
                                   std::size_t encounter, std::size_t horizon);

// ---- value maps -----------------------------------------------------------

struct ValueMap {
  std::vector<double> value;  // per cell, NaN where unvisited
  std::vector<std::size_t> visits;
  std::string provenance;

  bool visited(std::size_t cell) const { return visits[cell] > 0; }
};

/// Random walk of `steps` movement ticks from `start` at `pos` with the passage
/// closed and rewards withheld; records the PFC value at each visited cell.
ValueMap stop_and_scan(Agent& agent, const EnvConfig& env, const AgentState& start, GridPos pos,
                       nc::Rng& rng, std::size_t steps = 100);

/// Visit-weighted average of several maps.
ValueMap merge_maps(const std::vector<ValueMap>& maps, const std::string& provenance);

/// sum over visited cells of value * (N(cell; C2, sigma) - N(cell; C1, sigma)).
double dog_advantage(const ValueMap& map, const EnvConfig& env, double sigma = 1.0);

struct PathAdvantage {
  double start_leg = 0.0;  // S-C2 minus S-C1
  double goal_leg = 0.0;   // C2-G minus C1-G
};
/// Mean value over the visited corridor cells unique to the C2 path minus the
/// same for the C1 path. Shared cells cancel and are left out.
PathAdvantage path_value_advantage(const ValueMap& map, const EnvConfig& env);

// ---- manifold statistics --------------------------------------------------

struct PcaResult {
  std::size_t dimension = 0;
  std::vector<double> explained;  // descending variance ratios
  std::vector<std::array<double, 3>> embedding;
};

/// Smallest d whose accumulated explained variance reaches `threshold`.
PcaResult pca_aev_dimension(const Rows& states, double threshold = 0.70);

/// Mean squared distance of each point to the centroid of its K nearest
/// neighbours (excluding itself). Throws ContractError with fewer than K+1 points.
double knn_dispersion(const Rows& states, std::size_t k = 20);

enum class ManifoldStage : std::uint8_t { kBefore, kSwitch, kAfter };
const char* to_string(ManifoldStage s);

/// Every PFC state (movement, replay and arrival ticks) of a stage:
/// kBefore = the last `window` pre-relocation trials, kSwitch = the first
/// post-relocation trial, kAfter = the following `window` trials.
Rows pfc_states(const Session& session, ManifoldStage stage, std::size_t window = 3);

/// Uniform subsample without replacement down to `n` rows.
Rows subsample(const Rows& rows, std::size_t n, nc::Rng& rng);

}  // namespace replaygate

#endif  // REPLAYGATE_PROBES_HPP_
