// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#include "replaygate/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>

#include "replaygate/errors.hpp"
#include "replaygate/protocol.hpp"

namespace replaygate::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  if (std::fabs(v) < 1e-12) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string text(double x, double y, const std::string& s, const char* anchor, int size = 12,
                 const std::string& extra = "") {
  return "<text x=\"" + f2(x) + "\" y=\"" + f2(y) + "\" text-anchor=\"" + anchor + "\" font-size=\"" +
         std::to_string(size) + "\"" + extra + ">" + xml_escape(s) + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
  return "<line x1=\"" + f2(x1) + "\" y1=\"" + f2(y1) + "\" x2=\"" + f2(x2) + "\" y2=\"" + f2(y2) +
         "\" stroke=\"" + stroke + "\" stroke-width=\"" + f2(width) + "\"/>\n";
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  constexpr double kW = 680, kH = 420, kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const PlotSeries& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const double e = i < s.err.size() && std::isfinite(s.err[i]) ? s.err[i] : 0.0;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i] - e);
      y1 = std::max(y1, s.y[i] + e);
    }
  }
  if (!spec.x_categories.empty()) {
    x0 = -0.5;
    x1 = static_cast<double>(spec.x_categories.size()) - 0.5;
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f2(kW) + "\" height=\"" + f2(kH) +
                    "\" viewBox=\"0 0 " + f2(kW) + " " + f2(kH) + "\" font-family=\"sans-serif\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += text(kLeft + pw / 2, 22, spec.title, "middle", 14);
  svg += "<rect x=\"" + f2(kLeft) + "\" y=\"" + f2(kTop) + "\" width=\"" + f2(pw) + "\" height=\"" + f2(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double v = y0 + (y1 - y0) * i / kTicks;
    svg += line(kLeft - 4, py(v), kLeft, py(v), "black");
    svg += text(kLeft - 7, py(v) + 4, tick_label(v), "end", 11);
  }
  if (spec.x_categories.empty()) {
    for (int i = 0; i <= kTicks; ++i) {
      const double v = x0 + (x1 - x0) * i / kTicks;
      svg += line(px(v), kTop + ph, px(v), kTop + ph + 4, "black");
      svg += text(px(v), kTop + ph + 17, tick_label(v), "middle", 11);
    }
  } else {
    for (std::size_t i = 0; i < spec.x_categories.size(); ++i) {
      const double v = static_cast<double>(i);
      svg += line(px(v), kTop + ph, px(v), kTop + ph + 4, "black");
      svg += text(px(v), kTop + ph + 17, spec.x_categories[i], "middle", 9);
    }
  }
  svg += text(kLeft + pw / 2, kH - 15, spec.x_label, "middle");
  svg += text(18, kTop + ph / 2, spec.y_label, "middle", 12,
              " transform=\"rotate(-90 18 " + f2(kTop + ph / 2) + ")\"");

  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const PlotSeries& s = spec.series[k];
    const std::string color = kPalette[k % std::size(kPalette)];
    svg += "<g>\n";
    if (spec.lines) {
      std::string pts;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        pts += (pts.empty() ? "" : " ") + f2(px(s.x[i])) + "," + f2(py(s.y[i]));
      }
      if (!pts.empty()) {
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
      }
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const double cx = px(s.x[i]);
      if (i < s.err.size() && std::isfinite(s.err[i]) && s.err[i] > 0) {
        const double lo = py(s.y[i] - s.err[i]);
        const double hi = py(s.y[i] + s.err[i]);
        svg += line(cx, lo, cx, hi, color);
        svg += line(cx - 3, lo, cx + 3, lo, color);
        svg += line(cx - 3, hi, cx + 3, hi, color);
      }
      svg += "<circle cx=\"" + f2(cx) + "\" cy=\"" + f2(py(s.y[i])) + "\" r=\"" + (spec.lines ? "3" : "2") +
             "\" fill=\"" + color + "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
    svg += "<rect x=\"" + f2(kLeft + pw + 15) + "\" y=\"" + f2(ly - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
           color + "\"/>\n";
    svg += text(kLeft + pw + 30, ly + 1, s.name, "start", 11);
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

CsvTable aggregate(const std::vector<CsvTable>& tables, const std::vector<std::string>& keys,
                   const std::vector<std::string>& values) {
  std::vector<std::vector<std::string>> order;
  std::map<std::vector<std::string>, std::vector<std::vector<double>>> groups;  // key -> value -> per table
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const CsvTable& tab = tables[t];
    std::map<std::vector<std::string>, std::vector<std::vector<double>>> within;
    for (std::size_t r = 0; r < tab.rows.size(); ++r) {
      std::vector<std::string> key;
      for (const std::string& k : keys) key.push_back(tab.text(r, k));
      auto& cols = within[key];
      cols.resize(values.size());
      for (std::size_t v = 0; v < values.size(); ++v) {
        const double x = tab.num(r, values[v]);
        if (std::isfinite(x)) cols[v].push_back(x);
      }
      if (!groups.count(key)) {
        groups[key].resize(values.size());
        order.push_back(key);
      }
    }
    // A table contributes the mean of its own rows, so each table counts once.
    for (auto& [key, cols] : within) {
      for (std::size_t v = 0; v < values.size(); ++v) {
        if (!cols[v].empty()) groups[key][v].push_back(mean_se(cols[v]).mean);
      }
    }
  }
  CsvTable out;
  out.header = keys;
  for (const std::string& v : values) out.header.push_back(v);
  for (const std::string& v : values) out.header.push_back(v + "_se");
  out.header.push_back("runs");
  for (const auto& key : order) {
    std::vector<std::string> row = key;
    std::vector<std::string> ses;
    std::size_t runs = 0;
    for (const auto& per_table : groups[key]) {
      const MeanSe m = mean_se(per_table);
      row.push_back(per_table.empty() ? fmt(kNan) : fmt(m.mean));
      ses.push_back(per_table.empty() ? fmt(kNan) : fmt(m.se));
      runs = std::max(runs, per_table.size());
    }
    row.insert(row.end(), ses.begin(), ses.end());
    row.push_back(std::to_string(runs));
    out.rows.push_back(std::move(row));
  }
  return out;
}

namespace {

std::string to_csv(const CsvTable& t) {
  Csv csv(t.header);
  for (const auto& row : t.rows) {
    for (const std::string& c : row) csv.cell(c);
    csv.end_row();
  }
  return csv.str();
}

CsvTable filter(const CsvTable& t, const std::string& col, const std::function<bool(const std::string&)>& keep) {
  CsvTable out;
  out.header = t.header;
  const std::size_t c = t.column(col);
  for (const auto& row : t.rows) {
    if (keep(row[c])) out.rows.push_back(row);
  }
  return out;
}

/// Appends `name` = f(row) to every row.
CsvTable derive(CsvTable t, const std::string& name, const std::function<double(const CsvTable&, std::size_t)>& f) {
  std::vector<std::string> vals;
  for (std::size_t r = 0; r < t.rows.size(); ++r) vals.push_back(fmt(f(t, r)));
  t.header.push_back(name);
  for (std::size_t r = 0; r < t.rows.size(); ++r) t.rows[r].push_back(vals[r]);
  return t;
}

/// One series per value column, against a numeric key column.
std::vector<PlotSeries> numeric_series(const CsvTable& agg, const std::string& x,
                                       const std::vector<std::string>& values,
                                       const std::vector<std::string>& names = {}) {
  std::vector<PlotSeries> out;
  for (std::size_t v = 0; v < values.size(); ++v) {
    PlotSeries s;
    s.name = names.empty() ? values[v] : names[v];
    for (std::size_t r = 0; r < agg.rows.size(); ++r) {
      s.x.push_back(agg.num(r, x));
      s.y.push_back(agg.num(r, values[v]));
      s.err.push_back(agg.num(r, values[v] + "_se"));
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Series split by `group` column over categorical x positions from `cat`.
std::vector<PlotSeries> grouped_series(const CsvTable& agg, const std::string& group, const std::string& cat,
                                       const std::vector<std::string>& cats, const std::string& value,
                                       const std::function<double(double)>& map = nullptr) {
  std::vector<std::string> groups;
  for (std::size_t r = 0; r < agg.rows.size(); ++r) {
    const std::string& g = agg.text(r, group);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  std::vector<PlotSeries> out;
  for (const std::string& g : groups) {
    PlotSeries s;
    s.name = g;
    for (std::size_t r = 0; r < agg.rows.size(); ++r) {
      if (agg.text(r, group) != g) continue;
      const auto it = std::find(cats.begin(), cats.end(), agg.text(r, cat));
      if (it == cats.end()) continue;
      s.x.push_back(static_cast<double>(it - cats.begin()));
      const double y = agg.num(r, value);
      s.y.push_back(map ? map(y) : y);
      s.err.push_back(agg.num(r, value + "_se"));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> distinct(const CsvTable& t, const std::string& col) {
  std::vector<std::string> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (std::find(out.begin(), out.end(), t.text(r, col)) == out.end()) out.push_back(t.text(r, col));
  }
  return out;
}

class Emitter {
 public:
  Emitter(const std::vector<fs::path>& runs, fs::path out, std::ostream& warn)
      : runs_(runs), out_(std::move(out)), warn_(warn) {}

  /// Reads `file` from every run, or records a skip and returns nothing.
  bool load(const std::string& figure, const std::string& file, std::vector<CsvTable>& tables) {
    tables.clear();
    for (const fs::path& r : runs_) {
      if (!fs::is_regular_file(r / file)) {
        warn_ << "warning: skipping " << figure << ": " << (r / file).string() << " is missing\n";
        summary.skipped.push_back(figure);
        return false;
      }
      tables.push_back(read_csv(r / file));
    }
    return true;
  }

  void csv(const std::string& name, const CsvTable& t) {
    write_file(out_ / (name + ".csv"), to_csv(t));
    summary.written.push_back(name + ".csv");
  }

  void svg(const std::string& name, const PlotSpec& spec) {
    write_file(out_ / (name + ".svg"), render_svg(spec));
    summary.written.push_back(name + ".svg");
  }

  ReportSummary summary;

 private:
  const std::vector<fs::path>& runs_;
  fs::path out_;
  std::ostream& warn_;
};

std::vector<CsvTable> each(const std::vector<CsvTable>& ts, const std::function<CsvTable(const CsvTable&)>& f) {
  std::vector<CsvTable> out;
  for (const CsvTable& t : ts) out.push_back(f(t));
  return out;
}

/// Per-run means over rows sharing `keys`, so sessions and repeats collapse
/// before the across-run statistics.
std::vector<CsvTable> collapse(const std::vector<CsvTable>& ts, const std::vector<std::string>& keys,
                               const std::vector<std::string>& values) {
  return each(ts, [&](const CsvTable& t) {
    CsvTable a = aggregate({t}, keys, values);
    return a;
  });
}

}  // namespace

ReportSummary emit_reports(const std::vector<fs::path>& runs, const fs::path& out, std::ostream& warn) {
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  fs::create_directories(out);
  Emitter em(runs, out, warn);
  std::vector<CsvTable> ts;
  const std::string se_note = " (mean +/- 1 SE across " + std::to_string(runs.size()) + " runs)";

  if (em.load("fig1_pretraining", "pretrain_curve.csv", ts)) {
    const CsvTable a = aggregate(ts, {"update"}, {"loss", "accuracy"});
    em.csv("fig1_pretraining", a);
    em.svg("fig1_pretraining", {"World-model pretraining" + se_note, "update", "value",
                                numeric_series(a, "update", {"loss", "accuracy"}), {}, true});
  }

  if (em.load("fig1_training", "training_curve.csv", ts)) {
    const CsvTable a = aggregate(ts, {"env_steps"}, {"mean_reward", "success_rate"});
    em.csv("fig1_training", a);
    em.svg("fig1_training", {"PPO training" + se_note, "environment steps", "value",
                             numeric_series(a, "env_steps", {"mean_reward", "success_rate"}), {}, true});
  }

  if (em.load("fig2a_adaptation", "trials.csv", ts)) {
    const CsvTable a = aggregate(collapse(ts, {"trial", "post_index"}, {"reward", "success"}),
                                 {"trial", "post_index"}, {"reward", "success"});
    em.csv("fig2a_adaptation", a);
    em.svg("fig2a_adaptation", {"Reward per trial across relocation" + se_note, "trial", "reward",
                                numeric_series(a, "trial", {"reward"}), {}, true});
  }

  if (em.load("fig2d_contiguity", "contiguity.csv", ts)) {
    const CsvTable a = aggregate(collapse(ts, {}, {"trained", "untrained_hf"}), {}, {"trained", "untrained_hf"});
    em.csv("fig2d_contiguity", a);
  }

  if (em.load("fig2d_replay_distances", "replay_distances.csv", ts)) {
    const CsvTable a = aggregate(ts, {"distance"}, {"trained", "untrained_hf", "uniform"});
    em.csv("fig2d_replay_distances", a);
    em.svg("fig2d_replay_distances",
           {"Distance between adjacent replay steps" + se_note, "Manhattan distance", "fraction",
            numeric_series(a, "distance", {"trained", "untrained_hf", "uniform"}), {}, true});
  }

  if (em.load("fig2e_replay_distribution", "replay_distribution.csv", ts)) {
    const std::vector<std::string> labels = {"S-C1", "C1-G", "S-C2", "C2-G"};
    const CsvTable a = aggregate(ts, {"bin"}, labels);
    em.csv("fig2e_replay_distribution", a);
    em.svg("fig2e_replay_distribution", {"Replay distribution after relocation" + se_note,
                                         "post-relocation bin", "fraction of replays",
                                         numeric_series(a, "bin", labels), {}, true});
  }

  if (em.load("fig3a_ablation", "ablation.csv", ts)) {
    auto is_mask = [](const std::string& s) { return s.rfind("mask_last_", 0) == 0; };
    const CsvTable a = aggregate(each(ts, [&](const CsvTable& t) {
                                   return filter(t, "name", [&](const std::string& s) { return !is_mask(s); });
                                 }),
                                 {"name"}, {"mean_reward"});
    em.csv("fig3a_ablation", a);
    PlotSpec spec{"Message ablations" + se_note, "ablation", "mean reward", {}, distinct(a, "name"), false};
    PlotSeries s;
    s.name = "mean reward";
    for (std::size_t r = 0; r < a.rows.size(); ++r) {
      s.x.push_back(static_cast<double>(r));
      s.y.push_back(a.num(r, "mean_reward"));
      s.err.push_back(a.num(r, "mean_reward_se"));
    }
    spec.series.push_back(std::move(s));
    em.svg("fig3a_ablation", spec);

    const CsvTable b = aggregate(each(ts, [&](const CsvTable& t) { return filter(t, "name", is_mask); }), {"n"},
                                 {"mean_reward"});
    em.csv("fig3b_masked_steps", b);
    em.svg("fig3b_masked_steps", {"Masking the last n replay steps" + se_note, "masked steps", "mean reward",
                                  numeric_series(b, "n", {"mean_reward"}), {}, true});
  }

  if (em.load("fig3c_exploration", "exploration.csv", ts)) {
    const CsvTable a = aggregate(collapse(ts, {"model"}, {"exploration_steps"}), {"model"}, {"exploration_steps"});
    em.csv("fig3c_exploration", a);
    PlotSpec spec{"Exploration steps to the relocated reward" + se_note, "model", "steps", {}, distinct(a, "model"),
                  false};
    PlotSeries s;
    s.name = "exploration steps";
    for (std::size_t r = 0; r < a.rows.size(); ++r) {
      s.x.push_back(static_cast<double>(r));
      s.y.push_back(a.num(r, "exploration_steps"));
      s.err.push_back(a.num(r, "exploration_steps_se"));
    }
    spec.series.push_back(std::move(s));
    em.svg("fig3c_exploration", spec);
  }

  if (em.load("fig4a_reward_decoding", "decoding.csv", ts)) {
    const CsvTable a = aggregate(each(ts, [](const CsvTable& t) {
                                   return filter(t, "target", [](const std::string& s) { return s == "reward_location"; });
                                 }),
                                 {"source", "stage"}, {"accuracy", "shuffled_accuracy"});
    em.csv("fig4a_reward_decoding", a);
    const std::vector<std::string> stages = distinct(a, "stage");
    auto series = grouped_series(a, "source", "stage", stages, "accuracy");
    auto chance = grouped_series(a, "source", "stage", stages, "shuffled_accuracy");
    for (auto& c : chance) c.name += " shuffled";
    series.insert(series.end(), chance.begin(), chance.end());
    em.svg("fig4a_reward_decoding",
           {"Reward-location decoding" + se_note, "stage", "accuracy", series, stages, true});

    const CsvTable b = aggregate(each(ts, [](const CsvTable& t) {
                                   return derive(filter(t, "target",
                                                        [](const std::string& s) { return s == "future_action"; }),
                                                 "error", [](const CsvTable& x, std::size_t r) {
                                                   return 1.0 - x.num(r, "accuracy");
                                                 });
                                 }),
                                 {"encounter", "horizon"}, {"error"});
    em.csv("fig4b_future_action", b);
    std::vector<std::string> horizons = distinct(b, "horizon");
    em.svg("fig4b_future_action", {"Future-action decoding error" + se_note, "horizon", "error",
                                   grouped_series(b, "encounter", "horizon", horizons, "error"), horizons, true});
  }

  if (em.load("fig4c_value_maps", "value_maps.csv", ts)) {
    em.csv("fig4c_value_maps", aggregate(ts, {"stage", "x", "y"}, {"value"}));
  }

  if (em.load("fig4e_value_advantage", "value_advantage.csv", ts)) {
    const std::vector<std::string> vals = {"dog_mean", "start_leg_mean", "goal_leg_mean"};
    const CsvTable a = aggregate(ts, {"stage"}, vals);
    em.csv("fig4e_value_advantage", a);
    const std::vector<std::string> stages = distinct(a, "stage");
    std::vector<PlotSeries> series = numeric_series(
        derive(a, "index", [](const CsvTable&, std::size_t r) { return static_cast<double>(r); }), "index", vals,
        {"DoG advantage", "S-C2 minus S-C1", "C2-G minus C1-G"});
    em.svg("fig4e_value_advantage",
           {"Value advantage of the new path" + se_note, "stage", "advantage", series, stages, true});
  }

  if (em.load("fig5b_manifold", "manifold.csv", ts)) {
    const std::vector<std::string> vals = {"aev_dimension", "knn20", "knn8"};
    const CsvTable a = aggregate(collapse(ts, {"stage"}, vals), {"stage"}, vals);
    em.csv("fig5b_manifold", a);
    const std::vector<std::string> stages = distinct(a, "stage");
    const CsvTable idx = derive(a, "index", [](const CsvTable&, std::size_t r) { return static_cast<double>(r); });
    em.svg("fig5b_aev_dimension", {"PFC dimension at 70% explained variance" + se_note, "stage", "dimension",
                                   numeric_series(idx, "index", {"aev_dimension"}), stages, true});
    em.svg("fig5cd_knn_dispersion", {"KNN dispersion" + se_note, "stage", "dispersion",
                                     numeric_series(idx, "index", {"knn20", "knn8"}, {"K=20", "K=8"}), stages, true});
  }

  if (em.load("fig5a_pca_embedding", "pca_embedding.csv", ts)) {
    const CsvTable& t = ts.front();
    em.csv("fig5a_pca_embedding", t);
    PlotSpec spec{"PFC states, first two principal components (first run)", "PC1",
                  "PC2", {}, {}, false};
    for (const std::string& st : distinct(t, "stage")) {
      PlotSeries s;
      s.name = st;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.text(r, "stage") != st) continue;
        s.x.push_back(t.num(r, "pc1"));
        s.y.push_back(t.num(r, "pc2"));
      }
      spec.series.push_back(std::move(s));
    }
    em.svg("fig5a_pca_embedding", spec);
  }

  return em.summary;
}

}  // namespace replaygate::cli
