// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_CLI_RUN_CONFIG_HPP_
#define REPLAYGATE_CLI_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "replaygate/agent.hpp"
#include "replaygate/gridworld.hpp"
#include "replaygate/protocol.hpp"
#include "replaygate/training.hpp"

namespace replaygate::cli {

struct TestBlock {
  TestProtocol protocol;
  std::size_t sessions = 20;
};

/// Which analyses the probe stage runs, and their sample sizes.
struct ProbeSelection {
  bool contiguity = true;
  bool distribution = true;
  bool decoders = true;
  bool value_maps = true;
  bool manifold = true;
  std::size_t sessions = 100;
  std::size_t ablation_sessions = 40;
  std::size_t scan_steps = 100;
  std::size_t manifold_repeats = 10;
  std::size_t knn_points = 200;
  /// Post-relocation trials per replay-distribution bin.
  std::size_t bin_trials = 1;
  /// Checkpoint encounters at C2 scanned for value maps.
  std::size_t scan_encounters = 5;
};

/// Everything that determines a run. `out_dir` says where the run lives and is
/// not part of the stored copy or the hash.
struct RunConfig {
  std::uint64_t seed = 1;
  EnvConfig env;
  AgentConfig model;
  PretrainConfig pretrain;
  PpoConfig ppo;
  TestBlock test;
  ProbeSelection probes;
  std::filesystem::path out_dir = "runs/default";

  void validate() const;
};

/// Strict parse: unknown keys anywhere raise ConfigError; absent keys keep defaults.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);
/// Canonical serialization (fixed key order, two-space indent, trailing newline).
std::string config_to_string(const RunConfig& cfg);
/// Hex SHA-256 of the canonical serialization.
std::string config_hash(const RunConfig& cfg);

std::string sha256_hex(const std::string& bytes);

}  // namespace replaygate::cli

#endif  // REPLAYGATE_CLI_RUN_CONFIG_HPP_
