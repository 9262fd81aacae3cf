// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "replaygate/cli/pipeline.hpp"
#include "replaygate/cli/report.hpp"
#include "replaygate/cli/run_config.hpp"
#include "replaygate/cli/run_log.hpp"
#include "replaygate/errors.hpp"

using namespace replaygate;
using namespace replaygate::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("replaygate_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny_config(const fs::path& out) {
  RunConfig c;
  c.seed = 5;
  c.model.conv_filters = 2;
  c.model.embed_dim = 8;
  c.model.hf_hidden = 16;
  c.model.hf_input = 8;
  c.model.pfc_hidden = 8;
  c.pretrain.max_updates = 10;
  c.pretrain.eval_every = 5;
  c.pretrain.eval_steps = 100;
  c.pretrain.failure_accuracy = 0.0;
  c.ppo.rollout_steps = 32;
  c.ppo.num_envs = 2;
  c.ppo.total_env_steps = 256;
  c.ppo.eval_every = 128;
  c.ppo.eval_trials = 2;
  c.test.protocol.pre_trials = 2;
  c.test.protocol.post_trials = 3;
  c.test.sessions = 2;
  c.out_dir = out;
  return c;
}

CsvTable table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows) {
  CsvTable t;
  t.header = std::move(header);
  t.rows = std::move(rows);
  return t;
}

}  // namespace

TEST_CASE("config rejects unknown keys at every level") {
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"sead": 1})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"env": {"grid": 5}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"probes": {"knn": 3}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"seed": "one"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"model": {"variant": "half"}})")), ConfigError);
  CHECK_NOTHROW(config_from_json(nlohmann::json::parse("{}")));
}

TEST_CASE("config serialization round-trips and absent keys keep defaults") {
  const RunConfig d;
  const RunConfig parsed = config_from_json(nlohmann::json::parse(R"({"seed": 9, "replay_steps": 6})"));
  CHECK(parsed.seed == 9);
  CHECK(parsed.model.replay_steps == 6);
  CHECK(parsed.ppo.total_env_steps == d.ppo.total_env_steps);

  RunConfig c = tiny_config("somewhere");
  c.model.variant = Variant::kNoHf;
  const std::string text = config_to_string(c);
  const RunConfig back = config_from_json(nlohmann::json::parse(text));
  CHECK(config_to_string(back) == text);
  CHECK(back.model.variant == Variant::kNoHf);
  CHECK(text.back() == '\n');
}

TEST_CASE("config hash ignores the output directory only") {
  RunConfig a = tiny_config("dir_a");
  RunConfig b = tiny_config("dir_b");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 64);
  b.seed += 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config validation") {
  RunConfig c;
  c.probes.bin_trials = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.probes.knn_points = 20;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("number formatting is shortest round-trip") {
  CHECK(fmt(0.1) == "0.1");
  CHECK(fmt(0.0) == "0");
  CHECK(fmt(-0.0) == "0");
  CHECK(fmt(1.5) == "1.5");
  CHECK(fmt(std::nan("")) == "nan");
  CHECK(fmt(-INFINITY) == "-inf");
  const double x = 1.0 / 3.0;
  CHECK(std::stod(fmt(x)) == x);
}

TEST_CASE("csv writer checks row width and cell content") {
  Csv csv({"a", "b"});
  csv.cell(1).cell(std::string("x")).end_row();
  CHECK(csv.str() == "a,b\n1,x\n");
  csv.cell(2);
  CHECK_THROWS_AS(csv.end_row(), DimensionError);
  Csv bad({"a"});
  CHECK_THROWS_AS(bad.cell(std::string("x,y")), ContractError);
}

TEST_CASE("csv files read back") {
  const fs::path dir = scratch("csv");
  Csv csv({"k", "v"});
  csv.cell(std::string("p")).cell(0.25).end_row();
  csv.cell(std::string("q")).cell(std::nan("")).end_row();
  write_file(dir / "t.csv", csv.str());
  const CsvTable t = read_csv(dir / "t.csv");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.text(0, "k") == "p");
  CHECK(t.num(0, "v") == 0.25);
  CHECK(std::isnan(t.num(1, "v")));
  CHECK_THROWS_AS(t.column("missing"), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("manifest detects changed and missing files") {
  const fs::path dir = scratch("manifest");
  write_file(dir / "a.csv", "x\n1\n");
  write_file(dir / "b.jsonl", "{}\n");
  write_manifest(dir, "hash123");
  ManifestCheck m = verify_manifest(dir);
  CHECK(m.ok());
  CHECK(m.config_hash == "hash123");
  CHECK(m.files.size() == 2);
  CHECK(m.files.at("a.csv") == sha256_hex("x\n1\n"));

  write_file(dir / "a.csv", "x\n2\n");
  fs::remove(dir / "b.jsonl");
  m = verify_manifest(dir);
  CHECK_FALSE(m.ok());
  CHECK(m.mismatched == std::vector<std::string>{"a.csv", "b.jsonl"});
  CHECK_THROWS_AS(verify_manifest(dir / "nowhere"), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("environment variable overrides the output directory") {
  ::unsetenv(kOutDirEnv);
  CHECK(resolve_out_dir("flag") == fs::path("flag"));
  ::setenv(kOutDirEnv, "from_env", 1);
  CHECK(resolve_out_dir("flag") == fs::path("from_env"));
  ::unsetenv(kOutDirEnv);
}

TEST_CASE("aggregate takes per-table means, then mean and SE across tables") {
  // Table 1 has two rows for key 0 (mean 1); table 2 has value 3. Across
  // tables: mean 2, sample sd sqrt(2), SE sqrt(2)/sqrt(2) = 1.
  const CsvTable t1 = table({"k", "v"}, {{"0", "0.5"}, {"0", "1.5"}, {"1", "nan"}});
  const CsvTable t2 = table({"k", "v"}, {{"0", "3"}, {"1", "4"}});
  const CsvTable a = aggregate({t1, t2}, {"k"}, {"v"});
  REQUIRE(a.rows.size() == 2);
  CHECK(a.header == std::vector<std::string>{"k", "v", "v_se", "runs"});
  CHECK(a.num(0, "v") == doctest::Approx(2.0));
  CHECK(a.num(0, "v_se") == doctest::Approx(1.0));
  CHECK(a.num(0, "runs") == 2);
  CHECK(a.num(1, "v") == 4.0);
  CHECK(a.num(1, "runs") == 1);
}

TEST_CASE("svg rendering is deterministic and escapes text") {
  PlotSpec spec{"a < b & c", "x", "y", {{"s", {0, 1, 2}, {1, 2, std::nan("")}, {0.1, 0.2, 0.0}}}, {}, true};
  const std::string s1 = render_svg(spec);
  CHECK(s1 == render_svg(spec));
  CHECK(s1.rfind("<svg", 0) == 0);
  CHECK(s1.find("a &lt; b &amp; c") != std::string::npos);
  CHECK(s1.find("nan") == std::string::npos);
  CHECK(s1.substr(s1.size() - 7) == "</svg>\n");
}

TEST_CASE("stages refuse to run out of order") {
  const fs::path dir = scratch("order");
  const RunConfig c = tiny_config(dir);
  StageOptions opt;
  opt.out = dir;
  CHECK_THROWS_AS(run_train(c, opt), StageOrderError);
  CHECK_THROWS_AS(run_test(c, opt), StageOrderError);
  CHECK_THROWS_AS(run_probe(c, opt), StageOrderError);
  CHECK_THROWS_AS(run_ablate(c, opt), StageOrderError);
  opt.variant = "one_step_emission";
  CHECK_THROWS_AS(run_ablate(c, opt), StageOrderError);
  opt.variant = "other";
  CHECK_THROWS_AS(run_ablate(c, opt), ConfigError);
  CHECK_FALSE(fs::exists(dir));
}

TEST_CASE("tiny pipeline is byte-identical across output directories") {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  for (const fs::path& dir : {a, b}) {
    const RunConfig c = tiny_config(dir);
    StageOptions opt;
    opt.out = dir;
    run_pretrain(c, opt);
    run_train(c, opt);
    run_test(c, opt);
  }
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const std::string name = e.path().filename().string();
    if (name == kManifestName) continue;
    CAPTURE(name);
    CHECK(read_file(e.path()) == read_file(b / name));
    ++compared;
  }
  CHECK(compared >= 10);
  const ManifestCheck m = verify_manifest(a);
  CHECK(m.ok());
  CHECK(m.config_hash == config_hash(tiny_config(a)));

  // Same directory, different config.
  RunConfig other = tiny_config(a);
  other.seed = 99;
  StageOptions opt;
  opt.out = a;
  CHECK_THROWS_AS(run_test(other, opt), ConfigError);

  // Partial logs: figures needing probe output are skipped with a warning.
  const fs::path rep = scratch("report");
  std::ostringstream warn;
  const ReportSummary s = emit_reports({a, b}, rep, warn);
  CHECK(std::find(s.written.begin(), s.written.end(), "fig2a_adaptation.csv") != s.written.end());
  CHECK(std::find(s.skipped.begin(), s.skipped.end(), "fig2e_replay_distribution") != s.skipped.end());
  CHECK(warn.str().find("fig2e_replay_distribution") != std::string::npos);
  const std::string first = read_file(rep / "fig2a_adaptation.svg");
  std::ostringstream quiet;
  emit_reports({a, b}, rep, quiet);
  CHECK(read_file(rep / "fig2a_adaptation.svg") == first);

  for (const fs::path& p : {a, b, rep}) fs::remove_all(p);
}
