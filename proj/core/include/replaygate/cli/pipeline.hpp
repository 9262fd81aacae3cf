// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_CLI_PIPELINE_HPP_
#define REPLAYGATE_CLI_PIPELINE_HPP_

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "replaygate/cli/run_config.hpp"
#include "replaygate/protocol.hpp"

namespace replaygate::cli {

// File names inside a run directory.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kWorldModelFile = "world_model.json";
inline constexpr const char* kAgentFile = "agent.json";
inline constexpr const char* kOneStepAgentFile = "one_step_agent.json";

struct StageOptions {
  std::filesystem::path out;
  /// Overrides the checkpoint a stage would read from `out`.
  std::optional<std::filesystem::path> checkpoint;
  /// Ablation variant for `ablate`; empty selects the message-ablation battery.
  std::string variant;
  /// Progress lines; silent when null.
  std::ostream* log = nullptr;
};

/// Seeds of independent random streams derived from the run seed.
enum class Stream : std::uint64_t {
  kAgentInit = 11,
  kPretrain = 12,
  kPpo = 13,
  kUntrainedHf = 14,
  kTestSessions = 20000,
  kProbeSessions = 30000,
  kAblation = 40000,
  kDecoders = 50000,
  kScans = 60000,
  kManifold = 70000,
};
std::uint64_t stream_seed(const RunConfig& cfg, Stream s, std::uint64_t index = 0);

std::unique_ptr<Agent> make_agent(const RunConfig& cfg);
/// Fresh agent with every parameter replaced from `path`; shapes must match.
std::unique_ptr<Agent> load_agent(const RunConfig& cfg, const std::filesystem::path& path);

void run_pretrain(const RunConfig& cfg, const StageOptions& opt);
void run_train(const RunConfig& cfg, const StageOptions& opt);
void run_test(const RunConfig& cfg, const StageOptions& opt);
void run_ablate(const RunConfig& cfg, const StageOptions& opt);
void run_probe(const RunConfig& cfg, const StageOptions& opt);

/// Sessions `first`..`first+n-1` of a stream, all with fixed weights.
std::vector<Session> simulate_sessions(Agent& agent, const RunConfig& cfg, Stream stream,
                                       std::size_t n, const AblationSpec& ablation = {});

/// Mean reward per post-relocation trial across sessions, against the mean of
/// the last `pre_window` pre-relocation trials.
struct RecoveryCurve {
  double pre_level = 0.0;
  std::vector<MeanSe> post;
  /// First post trial whose mean reaches fraction * pre_level, or -1.
  int recovered_at = -1;
};
RecoveryCurve recovery_curve(const std::vector<Session>& sessions, std::size_t pre_window = 10,
                             double fraction = 0.9);

/// Fraction of consecutive replayed cells at Manhattan distance 1, per session
/// (NaN for sessions without a multi-step replay).
std::vector<double> adjacency_fractions(const std::vector<Session>& sessions);

/// Copy of `trained` whose HF weights are replaced by a fresh initialisation.
std::unique_ptr<Agent> with_untrained_hf(const Agent& trained, const RunConfig& cfg);

}  // namespace replaygate::cli

#endif  // REPLAYGATE_CLI_PIPELINE_HPP_
