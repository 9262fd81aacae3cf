// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/cli/run_log.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "replaygate/cli/run_config.hpp"
#include "replaygate/errors.hpp"

#ifndef REPLAYGATE_VERSION
#define REPLAYGATE_VERSION "unknown"
#endif

namespace replaygate::cli {

namespace fs = std::filesystem;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Csv::Csv(std::vector<std::string> header) : width_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ += ',';
    out_ += header[i];
  }
  out_ += '\n';
}

Csv& Csv::cell(const std::string& s) {
  if (s.find_first_of(",\n\"") != std::string::npos) {
    throw ContractError("csv cells may not contain commas, quotes or newlines: " + s);
  }
  if (in_row_++) out_ += ',';
  out_ += s;
  return *this;
}

Csv& Csv::cell(double v) { return cell(fmt(v)); }

Csv& Csv::cell(long long v) { return cell(std::to_string(v)); }

void Csv::end_row() {
  if (in_row_ != width_) {
    throw DimensionError("csv row has " + std::to_string(in_row_) + " cells, header has " +
                         std::to_string(width_));
  }
  out_ += '\n';
  in_row_ = 0;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("csv has no column '" + name + "'", 0);
  return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::num(std::size_t row, const std::string& name) const {
  const std::string& s = text(row, name);
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("not a number in column '" + name + "': " + s, 0);
  }
  return v;
}

const std::string& CsvTable::text(std::size_t row, const std::string& name) const {
  return rows.at(row).at(column(name));
}

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : l) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    cells.push_back(cur);
    return cells;
  };
  if (!std::getline(in, line)) throw ParseError("empty csv " + path.string(), 0);
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw ParseError("ragged row in " + path.string(), static_cast<std::size_t>(in.tellg()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_file(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

void write_manifest(const fs::path& dir, const std::string& config_hash) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != kManifestName) {
      names.push_back(e.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (const std::string& n : names) files[n] = sha256_hex(read_file(dir / n));
  nlohmann::ordered_json m;
  m["config_hash"] = config_hash;
  m["versions"] = {{"replaygate", REPLAYGATE_VERSION},
                   {"compiler", __VERSION__},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                 "." + std::to_string(EIGEN_MINOR_VERSION)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  m["created_at"] = utc_now();
  m["files"] = files;
  write_json(dir / kManifestName, m);
}

ManifestCheck verify_manifest(const fs::path& dir) {
  const nlohmann::json m = read_json(dir / kManifestName);
  ManifestCheck c;
  try {
    c.config_hash = m.at("config_hash").get<std::string>();
    for (const auto& [name, hash] : m.at("files").items()) c.files[name] = hash.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest in " + dir.string() + ": " + e.what(), 0);
  }
  for (const auto& [name, hash] : c.files) {
    if (!fs::is_regular_file(dir / name) || sha256_hex(read_file(dir / name)) != hash) {
      c.mismatched.push_back(name);
    }
  }
  return c;
}

fs::path resolve_out_dir(const fs::path& flag_value) {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return flag_value;
}

}  // namespace replaygate::cli
