// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "replaygate/cli/report.hpp"
#include "replaygate/numcore/rng.hpp"
#include "replaygate/probes.hpp"

namespace {

using namespace replaygate;

Rows random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  nc::Rng rng(seed);
  Rows out(n, std::vector<double>(d));
  for (auto& r : out) {
    for (double& v : r) v = rng.normal();
  }
  return out;
}

void BM_KnnDispersion(benchmark::State& state) {
  const Rows x = random_rows(static_cast<std::size_t>(state.range(0)), 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(knn_dispersion(x, 20));
}
BENCHMARK(BM_KnnDispersion)->Arg(200)->Arg(800);

void BM_PcaAev(benchmark::State& state) {
  const Rows x = random_rows(static_cast<std::size_t>(state.range(0)), 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(pca_aev_dimension(x).dimension);
}
BENCHMARK(BM_PcaAev)->Arg(200)->Arg(800);

void BM_Decode(benchmark::State& state) {
  const Rows x = random_rows(200, 128, 3);
  std::vector<int> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 4);
  const auto kind = state.range(0) ? DecoderKind::kRidge : DecoderKind::kGaussianNb;
  for (auto _ : state) benchmark::DoNotOptimize(decode(x, y, kind, 7).accuracy);
}
BENCHMARK(BM_Decode)->Arg(0)->Arg(1);

void BM_RenderSvg(benchmark::State& state) {
  cli::PlotSpec spec{"t", "x", "y", {}, {}, true};
  for (int s = 0; s < 4; ++s) {
    cli::PlotSeries ps;
    ps.name = "s" + std::to_string(s);
    for (int i = 0; i < 40; ++i) {
      ps.x.push_back(i);
      ps.y.push_back(i * 0.1 + s);
      ps.err.push_back(0.05);
    }
    spec.series.push_back(ps);
  }
  for (auto _ : state) benchmark::DoNotOptimize(cli::render_svg(spec).size());
}
BENCHMARK(BM_RenderSvg);

}  // namespace
