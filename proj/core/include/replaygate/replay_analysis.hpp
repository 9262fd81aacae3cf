// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_REPLAY_ANALYSIS_HPP_
#define REPLAYGATE_REPLAY_ANALYSIS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "replaygate/gridworld.hpp"

namespace replaygate {

enum class PathLabel : std::uint8_t { kSC1 = 0, kC1G = 1, kSC2 = 2, kC2G = 3 };
inline constexpr std::size_t kNumPaths = 4;
const char* to_string(PathLabel l);

/// Cells scored 1 (primary) or 0.5 (flank) for one path.
struct PathTemplate {
  PathLabel label;
  std::vector<GridPos> primary;
  std::vector<GridPos> flank;

  double cell_score(GridPos c) const;
};

/// Primary = every cell of the rectangle spanned by the endpoints (the cells
/// of some shortest path); flank = remaining cells at distance 1 from it.
PathTemplate make_template(PathLabel label, GridPos from, GridPos to, const EnvConfig& env);
std::array<PathTemplate, kNumPaths> canonical_templates(const EnvConfig& env);

struct Attribution {
  std::array<double, kNumPaths> scores{};
  /// Empty when the best score is tied.
  std::optional<PathLabel> label;
};

Attribution attribute(const std::vector<GridPos>& trajectory,
                      const std::array<PathTemplate, kNumPaths>& templates);

/// A decoded replay with the bin it belongs to.
struct BinnedTrajectory {
  int bin = 0;
  std::vector<GridPos> cells;
};

struct DistributionBin {
  int bin = 0;
  std::array<std::size_t, kNumPaths> counts{};
  std::size_t excluded = 0;
  std::size_t attributed() const;
  /// Normalised counts; all zero when nothing was attributed.
  std::array<double, kNumPaths> fractions() const;
};

/// Counts per bin for bins [0, n_bins); trajectories outside are ignored.
std::vector<DistributionBin> replay_distribution(const std::vector<BinnedTrajectory>& trajs,
                                                 int n_bins,
                                                 const std::array<PathTemplate, kNumPaths>& templates);

/// Manhattan distances between consecutive cells.
std::vector<int> step_distances(const std::vector<GridPos>& cells);

/// Normalised histogram over distances 0..max_distance.
std::vector<double> distance_histogram(const std::vector<int>& distances, int max_distance);

/// Exact distribution of the distance between two independent uniform cells.
std::vector<double> uniform_pair_distance_distribution(const EnvConfig& env);

/// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace replaygate

#endif  // REPLAYGATE_REPLAY_ANALYSIS_HPP_
