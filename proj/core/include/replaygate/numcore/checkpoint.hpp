// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_NUMCORE_CHECKPOINT_HPP_
#define REPLAYGATE_NUMCORE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "replaygate/numcore/nn.hpp"

namespace replaygate::nc {

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string phase;
  std::uint64_t step = 0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

/// Little-endian IEEE-754 bytes of `values`, base64 encoded.
std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f64(const std::string& text);

/// JSON text: {"format", "metadata": {...}, "params": {name: {shape, data, frozen}}}.
std::string checkpoint_to_string(const ParamStore& params, const CheckpointMeta& meta);
/// Replaces the values and frozen flags of params already present in `params`
/// and adds any that are missing. Throws ParseError on malformed input.
CheckpointMeta checkpoint_from_string(const std::string& text, ParamStore& params);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const CheckpointMeta& meta);
CheckpointMeta load_checkpoint(const std::filesystem::path& path, ParamStore& params);

}  // namespace replaygate::nc

#endif  // REPLAYGATE_NUMCORE_CHECKPOINT_HPP_
