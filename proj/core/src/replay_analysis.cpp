// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/replay_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "replaygate/errors.hpp"

namespace replaygate {

const char* to_string(PathLabel l) {
  switch (l) {
    case PathLabel::kSC1: return "S-C1";
    case PathLabel::kC1G: return "C1-G";
    case PathLabel::kSC2: return "S-C2";
    case PathLabel::kC2G: return "C2-G";
  }
  return "unknown";
}

double PathTemplate::cell_score(GridPos c) const {
  if (std::find(primary.begin(), primary.end(), c) != primary.end()) return 1.0;
  if (std::find(flank.begin(), flank.end(), c) != flank.end()) return 0.5;
  return 0.0;
}

PathTemplate make_template(PathLabel label, GridPos from, GridPos to, const EnvConfig& env) {
  PathTemplate t{label, {}, {}};
  const int x0 = std::min(from.x, to.x);
  const int x1 = std::max(from.x, to.x);
  const int y0 = std::min(from.y, to.y);
  const int y1 = std::max(from.y, to.y);
  for (int i = 0; i < env.num_cells(); ++i) {
    const GridPos c = env.cell_pos(i);
    const int dx = c.x < x0 ? x0 - c.x : (c.x > x1 ? c.x - x1 : 0);
    const int dy = c.y < y0 ? y0 - c.y : (c.y > y1 ? c.y - y1 : 0);
    if (dx + dy == 0) t.primary.push_back(c);
    else if (dx + dy == 1) t.flank.push_back(c);
  }
  return t;
}

std::array<PathTemplate, kNumPaths> canonical_templates(const EnvConfig& env) {
  return {make_template(PathLabel::kSC1, env.start, env.checkpoint1, env),
          make_template(PathLabel::kC1G, env.checkpoint1, env.goal, env),
          make_template(PathLabel::kSC2, env.start, env.checkpoint2, env),
          make_template(PathLabel::kC2G, env.checkpoint2, env.goal, env)};
}

Attribution attribute(const std::vector<GridPos>& trajectory,
                      const std::array<PathTemplate, kNumPaths>& templates) {
  Attribution a;
  for (std::size_t p = 0; p < kNumPaths; ++p) {
    for (GridPos c : trajectory) a.scores[p] += templates[p].cell_score(c);
  }
  const auto best = std::max_element(a.scores.begin(), a.scores.end());
  if (std::count(a.scores.begin(), a.scores.end(), *best) == 1) {
    a.label = templates[static_cast<std::size_t>(best - a.scores.begin())].label;
  }
  return a;
}

std::size_t DistributionBin::attributed() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::array<double, kNumPaths> DistributionBin::fractions() const {
  std::array<double, kNumPaths> f{};
  const std::size_t n = attributed();
  if (n == 0) return f;
  for (std::size_t i = 0; i < kNumPaths; ++i) f[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
  return f;
}

std::vector<DistributionBin> replay_distribution(const std::vector<BinnedTrajectory>& trajs,
                                                 int n_bins,
                                                 const std::array<PathTemplate, kNumPaths>& templates) {
  std::vector<DistributionBin> bins(static_cast<std::size_t>(std::max(n_bins, 0)));
  for (int b = 0; b < n_bins; ++b) bins[static_cast<std::size_t>(b)].bin = b;
  for (const BinnedTrajectory& t : trajs) {
    if (t.bin < 0 || t.bin >= n_bins) continue;
    DistributionBin& bin = bins[static_cast<std::size_t>(t.bin)];
    const Attribution a = attribute(t.cells, templates);
    if (a.label) ++bin.counts[static_cast<std::size_t>(*a.label)];
    else ++bin.excluded;
  }
  return bins;
}

std::vector<int> step_distances(const std::vector<GridPos>& cells) {
  std::vector<int> d;
  for (std::size_t i = 1; i < cells.size(); ++i) d.push_back(manhattan(cells[i - 1], cells[i]));
  return d;
}

std::vector<double> distance_histogram(const std::vector<int>& distances, int max_distance) {
  std::vector<double> h(static_cast<std::size_t>(max_distance + 1), 0.0);
  if (distances.empty()) return h;
  for (int d : distances) {
    if (d < 0 || d > max_distance) throw DimensionError("distance_histogram: distance out of range");
    h[static_cast<std::size_t>(d)] += 1.0;
  }
  for (double& v : h) v /= static_cast<double>(distances.size());
  return h;
}

std::vector<double> uniform_pair_distance_distribution(const EnvConfig& env) {
  std::vector<int> d;
  for (int a = 0; a < env.num_cells(); ++a) {
    for (int b = 0; b < env.num_cells(); ++b) d.push_back(manhattan(env.cell_pos(a), env.cell_pos(b)));
  }
  return distance_histogram(d, 2 * (env.grid_side - 1));
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("spearman: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace replaygate
