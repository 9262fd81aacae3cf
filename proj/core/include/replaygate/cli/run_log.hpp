// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_CLI_RUN_LOG_HPP_
#define REPLAYGATE_CLI_RUN_LOG_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace replaygate::cli {

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kOutDirEnv = "REPLAYGATE_OUT_DIR";

/// Shortest round-trip decimal form; "nan" / "inf" / "-inf" for non-finite values.
std::string fmt(double v);

/// Comma-separated rows with a fixed header.
class Csv {
 public:
  explicit Csv(std::vector<std::string> header);
  Csv& cell(const std::string& s);
  Csv& cell(double v);
  Csv& cell(long long v);
  Csv& cell(std::size_t v) { return cell(static_cast<long long>(v)); }
  Csv& cell(int v) { return cell(static_cast<long long>(v)); }
  /// Ends the current row; throws DimensionError if its width is wrong.
  void end_row();
  std::string str() const { return out_; }

 private:
  std::size_t width_;
  std::size_t in_row_ = 0;
  std::string out_;
};

/// Parsed CSV: header plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double num(std::size_t row, const std::string& name) const;
  const std::string& text(std::size_t row, const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
/// Pretty-printed JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Rewrites manifest.json: config hash, tool versions, creation time and the
/// SHA-256 of every other regular file in `dir` (sorted by name).
void write_manifest(const std::filesystem::path& dir, const std::string& config_hash);

struct ManifestCheck {
  std::string config_hash;
  std::map<std::string, std::string> files;
  std::vector<std::string> mismatched;  // listed but changed or missing
  bool ok() const { return mismatched.empty(); }
};
/// Re-hashes the files listed in the manifest. Throws ParseError when there is
/// no readable manifest.
ManifestCheck verify_manifest(const std::filesystem::path& dir);

/// `flag_value` unless the REPLAYGATE_OUT_DIR environment variable is set.
std::filesystem::path resolve_out_dir(const std::filesystem::path& flag_value);

}  // namespace replaygate::cli

#endif  // REPLAYGATE_CLI_RUN_LOG_HPP_
