// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_CLI_REPORT_HPP_
#define REPLAYGATE_CLI_REPORT_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "replaygate/cli/run_log.hpp"

namespace replaygate::cli {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  /// Half-width of the error bar at each point; empty for none.
  std::vector<double> err;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  /// Category names for x = 0, 1, ...; numeric ticks when empty.
  std::vector<std::string> x_categories;
  bool lines = true;
};

/// Self-contained SVG; identical input gives identical bytes.
std::string render_svg(const PlotSpec& spec);

/// Groups rows of several tables by `keys` and reports, for each of `values`,
/// the mean and standard error across tables (NaN cells ignored). Output
/// columns: keys, values, `<value>_se` for each value, `runs`. Rows keep the
/// order in which their key first appears.
CsvTable aggregate(const std::vector<CsvTable>& tables, const std::vector<std::string>& keys,
                   const std::vector<std::string>& values);

struct ReportSummary {
  std::vector<std::string> written;
  std::vector<std::string> skipped;
};

/// Rebuilds every figure's CSV and SVG in `out` from the logs in `runs` (one
/// directory per seed). A figure whose logs are missing from any run is skipped
/// with a warning on `warn`.
ReportSummary emit_reports(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out,
                           std::ostream& warn);

}  // namespace replaygate::cli

#endif  // REPLAYGATE_CLI_REPORT_HPP_
