// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

// replaygate command-line driver: pretrain, train, test, ablate, probe, report.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "replaygate/cli/pipeline.hpp"
#include "replaygate/cli/report.hpp"
#include "replaygate/cli/run_config.hpp"
#include "replaygate/cli/run_log.hpp"
#include "replaygate/errors.hpp"

namespace {

namespace fs = std::filesystem;
namespace rc = replaygate::cli;

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kStageOrder = 3,
  kNumerical = 4,
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::string variant;
  std::optional<std::size_t> replay_steps;
  std::vector<std::string> runs;
  bool quiet = false;
};

rc::RunConfig resolve_config(const Flags& f, const std::string& command) {
  rc::RunConfig cfg = f.config.empty() ? rc::RunConfig{} : rc::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.replay_steps) cfg.model.replay_steps = *f.replay_steps;
  if (!f.variant.empty() && command != "ablate") {
    try {
      cfg.model.variant = replaygate::variant_from_string(f.variant);
    } catch (const std::exception& e) {
      throw replaygate::ConfigError(std::string("--variant: ") + e.what());
    }
  }
  if (!f.out.empty()) cfg.out_dir = f.out;
  cfg.out_dir = rc::resolve_out_dir(cfg.out_dir);
  cfg.validate();
  return cfg;
}

int run(const std::string& command, const Flags& f) {
  if (command == "report") {
    std::vector<fs::path> runs(f.runs.begin(), f.runs.end());
    const fs::path out = rc::resolve_out_dir(f.out.empty() ? fs::path("report") : fs::path(f.out));
    const rc::ReportSummary s = rc::emit_reports(runs, out, std::cerr);
    if (!f.quiet) {
      std::cout << "wrote " << s.written.size() << " files to " << out.string() << ", skipped "
                << s.skipped.size() << " figures\n";
    }
    return kOk;
  }
  const rc::RunConfig cfg = resolve_config(f, command);
  rc::StageOptions opt;
  opt.out = cfg.out_dir;
  if (!f.checkpoint.empty()) opt.checkpoint = fs::path(f.checkpoint);
  if (command == "ablate") opt.variant = f.variant;
  opt.log = f.quiet ? nullptr : &std::cout;
  if (command == "pretrain") rc::run_pretrain(cfg, opt);
  if (command == "train") rc::run_train(cfg, opt);
  if (command == "test") rc::run_test(cfg, opt);
  if (command == "ablate") rc::run_ablate(cfg, opt);
  if (command == "probe") rc::run_probe(cfg, opt);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replay-gated world-model agent: training, testing and analysis pipeline"};
  app.require_subcommand(1, 1);
  Flags f;

  auto add_common = [&](CLI::App* sub, bool stage) {
    sub->add_flag("-q,--quiet", f.quiet, "Suppress progress output");
    sub->add_option("--out", f.out, std::string("Output directory (overridden by ") + rc::kOutDirEnv + ")");
    if (!stage) return;
    sub->add_option("--config", f.config, "Run config JSON; unknown keys are rejected")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Override the config seed");
    sub->add_option("--checkpoint", f.checkpoint, "Checkpoint to read instead of the one in --out");
    sub->add_option("--variant", f.variant,
                    "Model variant (full, no_HF, one_step_emission); for ablate: battery or one_step_emission");
    sub->add_option("--replay-steps", f.replay_steps, "Override the number of replay steps");
  };
  const std::pair<const char*, const char*> stages[] = {
      {"pretrain", "Pretrain the encoder and world model on random walks"},
      {"train", "Train the policy and passage with PPO on a frozen world model"},
      {"test", "Run relocation sessions with frozen weights and log movement and replays"},
      {"ablate", "Message-ablation battery, or the one-step-emission retrain"},
      {"probe", "Replay statistics, decoders, value maps and manifold analyses"},
  };
  for (const auto& [name, help] : stages) add_common(app.add_subcommand(name, help), true);
  CLI::App* report = app.add_subcommand("report", "Regenerate figure CSV and SVG files from run logs");
  add_common(report, false);
  report->add_option("runs", f.runs, "Run directories, one per seed")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, f);
  } catch (const replaygate::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const replaygate::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const replaygate::StageOrderError& e) {
    std::cerr << "stage-order error: " << e.what() << '\n';
    return kStageOrder;
  } catch (const replaygate::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const replaygate::PretrainingFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
