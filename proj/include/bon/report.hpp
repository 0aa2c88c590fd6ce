#pragma once

// Table and plot emission from stored records. Rendering is a pure function
// of the record contents, so regenerating a report never changes a byte, and
// every printed number is recomputable from the per-prompt records.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bon/errors.hpp"
#include "bon/records.hpp"
#include "bon/svgplot.hpp"

namespace bon {

namespace detail {

inline int algorithm_order(Algorithm a) {
  switch (a) {
    case Algorithm::conform: return 0;
    case Algorithm::initno: return 1;
    case Algorithm::selfcross: return 2;
    case Algorithm::initno_selfcross: return 3;
    case Algorithm::none: return 4;
  }
  return 5;
}

struct ColumnKey {
  std::string backbone;
  Algorithm algorithm;
  bool operator<(const ColumnKey& o) const {
    if (backbone != o.backbone) return backbone < o.backbone;
    return algorithm_order(algorithm) < algorithm_order(o.algorithm);
  }
  std::string label() const { return std::string(to_string(algorithm)) + "(" + backbone + ")"; }
};

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Column-mean table data for one dataset: rows are N values, cells are
/// seed-averaged aggregate scores.
struct TableData {
  std::vector<int> n_values;
  std::vector<ColumnKey> columns;
  std::map<std::pair<int, std::string>, double> values;  // (N, column label) -> mean score
};

inline TableData tabulate(const std::vector<CellRecord>& cells, DatasetId dataset) {
  TableData t;
  std::set<int> ns;
  std::set<ColumnKey> cols;
  std::map<std::pair<int, std::string>, std::vector<std::pair<std::uint64_t, double>>> raw;
  for (const auto& c : cells) {
    if (c.dataset_id != dataset) continue;
    const ColumnKey key{c.backbone_id, c.algorithm};
    ns.insert(c.n_budget);
    cols.insert(key);
    raw[{c.n_budget, key.label()}].push_back({c.seed, c.aggregate_score});
  }
  t.n_values.assign(ns.begin(), ns.end());
  t.columns.assign(cols.begin(), cols.end());
  for (auto& [key, scores] : raw) {
    std::sort(scores.begin(), scores.end());
    double sum = 0.0;
    for (const auto& [seed, s] : scores) sum += s;
    t.values[key] = sum / static_cast<double>(scores.size());
  }
  return t;
}

}  // namespace detail

/// Render one dataset's results in the appendix layout: rows are budgets N,
/// columns are algorithm(backbone), entries are seed-averaged scores.
inline std::string render_dataset_table(const std::vector<CellRecord>& cells, DatasetId dataset) {
  const auto t = detail::tabulate(cells, dataset);
  if (t.n_values.empty()) throw ValidationError("no cell records for dataset " + std::string(to_string(dataset)));
  std::string out = "# " + std::string(to_string(dataset)) + "\n";
  std::vector<std::size_t> widths;
  std::string header = "     N";
  for (const auto& col : t.columns) {
    const std::string label = col.label();
    widths.push_back(std::max<std::size_t>(label.size(), 6));
    header += "  " + std::string(widths.back() - label.size(), ' ') + label;
  }
  out += header + "\n";
  for (int n : t.n_values) {
    std::string row = std::to_string(n);
    row = std::string(6 - std::min<std::size_t>(6, row.size()), ' ') + row;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      const auto it = t.values.find({n, t.columns[i].label()});
      const std::string cell = it == t.values.end() ? "-" : detail::fmt2(it->second);
      row += "  " + std::string(widths[i] - std::min(widths[i], cell.size()), ' ') + cell;
    }
    out += row + "\n";
  }
  return out;
}

inline std::string render_dataset_csv(const std::vector<CellRecord>& cells, DatasetId dataset) {
  const auto t = detail::tabulate(cells, dataset);
  if (t.n_values.empty()) throw ValidationError("no cell records for dataset " + std::string(to_string(dataset)));
  std::string out = "N";
  for (const auto& col : t.columns) out += "," + col.label();
  out += "\n";
  for (int n : t.n_values) {
    out += std::to_string(n);
    for (const auto& col : t.columns) {
      const auto it = t.values.find({n, col.label()});
      out += ",";
      out += it == t.values.end() ? "" : detail::fmt2(it->second);
    }
    out += "\n";
  }
  return out;
}

inline std::string render_dataset_plot(const std::vector<CellRecord>& cells, DatasetId dataset) {
  const auto t = detail::tabulate(cells, dataset);
  if (t.n_values.empty()) throw ValidationError("no cell records for dataset " + std::string(to_string(dataset)));
  std::vector<svg::Series> series;
  for (const auto& col : t.columns) {
    svg::Series s;
    s.label = col.label();
    for (int n : t.n_values) {
      const auto it = t.values.find({n, col.label()});
      if (it != t.values.end()) s.points.push_back({n / 10.0, it->second});
    }
    if (!s.points.empty()) series.push_back(std::move(s));
  }
  return svg::render_line_chart(std::string(to_string(dataset)), "loss calculations N / 10", "score", series);
}

/// Cross-check stored cell aggregates against the raw per-prompt records.
/// Complete cells must recompute exactly; any mismatch is an error.
inline void verify_aggregates(const LoadedRecords& records) {
  std::map<std::string, std::vector<const PromptRecord*>> judged;
  for (const auto& p : records.prompts)
    if (p.status == PromptStatus::ok && p.judge) judged[cell_key(p)].push_back(&p);
  for (const auto& c : records.cells) {
    if (c.n_questions <= 0 || c.n_questions != 3 * static_cast<long>(c.n_prompts))
      throw ValidationError("cell record " + cell_key(c) + " has inconsistent question counts");
    const double expect = 100.0 * static_cast<double>(c.n_positive) / static_cast<double>(c.n_questions);
    if (expect != c.aggregate_score)
      throw ValidationError("cell record " + cell_key(c) + " aggregate does not match its counts");
    const auto it = judged.find(cell_key(c));
    if (it == judged.end()) continue;  // fixture-style cell without prompt grain
    if (static_cast<int>(it->second.size()) != c.n_prompts) continue;  // incomplete, resumable state
    long pos = 0;
    for (const auto* p : it->second) pos += p->judge->positives();
    if (pos != c.n_positive)
      throw ValidationError("cell record " + cell_key(c) + " disagrees with its per-prompt records");
  }
}

struct ReportResult {
  std::vector<std::filesystem::path> files;
  int corrupt_lines = 0;
  int cells = 0;
};

/// Regenerate every table, CSV, and plot from a record file.
inline ReportResult write_report(const std::filesystem::path& records_path, const std::filesystem::path& out_dir) {
  const LoadedRecords records = load_records(records_path);
  if (records.cells.empty()) throw Error("no cell records in " + records_path.string() + "; nothing to report");
  verify_aggregates(records);

  std::set<DatasetId> datasets;
  for (const auto& c : records.cells) datasets.insert(c.dataset_id);

  std::filesystem::create_directories(out_dir);
  ReportResult out;
  out.corrupt_lines = records.corrupt_lines;
  out.cells = static_cast<int>(records.cells.size());
  const auto emit = [&](const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f << content;
    out.files.push_back(path);
  };
  for (DatasetId ds : datasets) {
    const std::string name(to_string(ds));
    emit(out_dir / ("table_" + name + ".txt"), render_dataset_table(records.cells, ds));
    emit(out_dir / ("table_" + name + ".csv"), render_dataset_csv(records.cells, ds));
    emit(out_dir / ("plot_" + name + ".svg"), render_dataset_plot(records.cells, ds));
  }
  return out;
}

}  // namespace bon
