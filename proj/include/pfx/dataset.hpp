#ifndef PFX_DATASET_HPP
#define PFX_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pfx/common.hpp"

namespace pfx {

enum class Task { kRegression, kClassification };

inline const char* to_string(Task t) {
  return t == Task::kRegression ? "regression" : "classification";
}

inline Task task_from_string(const std::string& s) {
  if (s == "reg" || s == "regression") return Task::kRegression;
  if (s == "clf" || s == "classification") return Task::kClassification;
  throw std::invalid_argument("unknown task '" + s + "' (expected reg|clf)");
}

// Training/evaluation table. Features are stored column-major: the traversal
// and split-search hot loops stream single feature columns.
struct Dataset {
  std::vector<std::vector<double>> columns;  // [p][n]
  std::vector<double> targets;               // length n; class labels as 0..C-1
  std::vector<std::string> feature_names;
  Task task = Task::kRegression;

  std::size_t n_rows() const { return targets.size(); }
  std::size_t n_features() const { return columns.size(); }

  double feature(std::size_t row, std::size_t col) const { return columns[col][row]; }

  std::vector<double> row(std::size_t i) const {
    std::vector<double> r(n_features());
    for (std::size_t j = 0; j < n_features(); ++j) r[j] = columns[j][i];
    return r;
  }

  int n_classes() const {
    if (task != Task::kClassification) return 0;
    double mx = -1.0;
    for (double y : targets) mx = std::max(mx, y);
    return static_cast<int>(mx) + 1;
  }

  void validate() const {
    if (n_rows() == 0) throw std::invalid_argument("dataset: need at least one row");
    if (n_features() == 0) throw std::invalid_argument("dataset: need at least one feature");
    if (feature_names.size() != n_features())
      throw std::invalid_argument("dataset: feature_names size mismatch");
    for (const auto& col : columns) {
      if (col.size() != n_rows()) throw std::invalid_argument("dataset: ragged feature columns");
      for (double v : col)
        if (!std::isfinite(v)) throw std::invalid_argument("dataset: non-finite feature value");
    }
    if (task == Task::kClassification) {
      for (double y : targets) {
        if (!(y >= 0.0) || y != std::floor(y))
          throw std::invalid_argument("dataset: classification labels must be integers >= 0");
      }
      if (n_classes() < 2)
        throw std::invalid_argument("dataset: classification needs at least two classes");
    } else {
      for (double y : targets)
        if (!std::isfinite(y)) throw std::invalid_argument("dataset: non-finite target");
    }
  }

  std::uint64_t content_hash() const {
    Fnv1a h;
    h.update(static_cast<std::uint64_t>(n_rows()));
    h.update(static_cast<std::uint64_t>(n_features()));
    h.update(static_cast<std::uint64_t>(task == Task::kClassification ? 1 : 0));
    for (const auto& col : columns)
      for (double v : col) h.update(v);
    for (double y : targets) h.update(y);
    return h.digest();
  }
};

// ---------------------------------------------------------------------------
// CSV ingestion / emission. One header row, numeric cells, a named target.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_cell(const std::string& s, std::size_t row, std::size_t col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("csv: non-numeric cell at row " + std::to_string(row) + ", column " +
                             std::to_string(col) + ": '" + s + "'");
  }
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const std::string& target_column, Task task) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file '" + path + "'");
  auto header = detail::split_csv_line(line);
  std::size_t target_idx = header.size();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == target_column) target_idx = j;
  if (target_idx == header.size())
    throw std::runtime_error("csv: missing target column '" + target_column + "'");

  Dataset ds;
  ds.task = task;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != target_idx) ds.feature_names.push_back(header[j]);
  ds.columns.resize(ds.feature_names.size());

  std::size_t row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("csv: row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    std::size_t k = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = detail::parse_cell(cells[j], row, j);
      if (j == target_idx)
        ds.targets.push_back(v);
      else
        ds.columns[k++].push_back(v);
    }
    ++row;
  }
  ds.validate();
  return ds;
}

inline void save_csv(const Dataset& ds, const std::string& path,
                     const std::string& target_column = "target") {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv: cannot write '" + path + "'");
  out.precision(17);
  for (std::size_t j = 0; j < ds.n_features(); ++j) out << ds.feature_names[j] << ',';
  out << target_column << '\n';
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (std::size_t j = 0; j < ds.n_features(); ++j) out << ds.columns[j][i] << ',';
    out << ds.targets[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Train/test splitting. Deterministic given the seed; stratified by class for
// classification so small classes survive the split.
// ---------------------------------------------------------------------------

inline Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.task = ds.task;
  out.feature_names = ds.feature_names;
  out.columns.resize(ds.n_features());
  for (std::size_t j = 0; j < ds.n_features(); ++j) {
    out.columns[j].reserve(rows.size());
    for (std::size_t i : rows) out.columns[j].push_back(ds.columns[j][i]);
  }
  out.targets.reserve(rows.size());
  for (std::size_t i : rows) out.targets.push_back(ds.targets[i]);
  return out;
}

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

inline SplitResult split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("split: test_fraction must be in [0,1)");
  std::vector<std::size_t> order(ds.n_rows());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.bounded(i)]);

  std::vector<std::size_t> train_rows, test_rows;
  if (ds.task == Task::kClassification) {
    int nc = ds.n_classes();
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(nc));
    for (std::size_t i : order) by_class[static_cast<std::size_t>(ds.targets[i])].push_back(i);
    for (auto& members : by_class) {
      std::size_t n_test = static_cast<std::size_t>(
          std::llround(test_fraction * static_cast<double>(members.size())));
      for (std::size_t k = 0; k < members.size(); ++k)
        (k < n_test ? test_rows : train_rows).push_back(members[k]);
    }
  } else {
    std::size_t n_test =
        static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.n_rows())));
    for (std::size_t k = 0; k < order.size(); ++k)
      (k < n_test ? test_rows : train_rows).push_back(order[k]);
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {take_rows(ds, train_rows), take_rows(ds, test_rows), std::move(train_rows),
          std::move(test_rows)};
}

}  // namespace pfx

#endif  // PFX_DATASET_HPP
