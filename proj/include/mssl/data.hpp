#pragma once

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mssl/common.hpp"

namespace mssl {

enum class LossKind { squared, logistic };

inline std::string to_string(LossKind k) { return k == LossKind::squared ? "squared" : "logistic"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "squared") return LossKind::squared;
  if (s == "logistic") return LossKind::logistic;
  throw DataError("unknown loss kind '" + s + "' (expected \"squared\" or \"logistic\")");
}

/// One task: an n_k x d design matrix and its response vector.
struct TaskData {
  std::string id;
  Matrix X;
  Vector y;

  Index rows() const { return X.rows(); }
};

/// K tasks over a shared covariate space of dimension d.
///
/// Immutable by convention once loaded; the solvers only read it.
struct MultiTaskDataset {
  std::vector<TaskData> tasks;
  Index d = 0;
  LossKind loss = LossKind::squared;

  Index num_tasks() const { return static_cast<Index>(tasks.size()); }

  bool equal_sizes() const {
    for (const auto& t : tasks)
      if (t.rows() != tasks.front().rows()) return false;
    return true;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(tasks.size());
    for (const auto& t : tasks) out.push_back(t.id);
    return out;
  }

  /// Throws DataError when any dataset invariant is broken.
  void validate() const {
    if (tasks.empty()) throw DataError("dataset has no tasks");
    if (d < 1) throw DataError("dataset has no covariates");
    std::set<std::string> seen;
    for (const auto& t : tasks) {
      if (!seen.insert(t.id).second) throw DataError("duplicate task id '" + t.id + "'");
      if (t.X.cols() != d)
        throw DataError("task '" + t.id + "' has " + std::to_string(t.X.cols()) +
                        " covariates, expected " + std::to_string(d));
      if (t.X.rows() < 1) throw DataError("task '" + t.id + "' has no rows");
      if (t.y.size() != t.X.rows()) throw DataError("task '" + t.id + "' response length mismatch");
      if (!t.X.allFinite() || !t.y.allFinite())
        throw DataError("task '" + t.id + "' contains NaN or Inf");
      if (loss == LossKind::logistic)
        for (Index i = 0; i < t.y.size(); ++i)
          if (t.y[i] != 0.0 && t.y[i] != 1.0)
            throw DataError("task '" + t.id + "' row " + std::to_string(i + 1) +
                            ": classification label must be 0 or 1");
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_number(std::string_view cell, const std::string& where) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
    throw DataError(where + ": non-numeric cell '" + std::string(cell) + "'");
  if (!std::isfinite(v)) throw DataError(where + ": non-finite cell '" + std::string(cell) + "'");
  return v;
}

}  // namespace detail

/// Formats with 17 significant digits, enough to round-trip any double.
inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);  // shortest form that reads back exactly
  return std::string(buf, ptr);
}

/// Numeric CSV with a mandatory header row. Returns rows x cols.
inline Matrix read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file (header row required)");
  const auto ncols = static_cast<Index>(detail::split_commas(line).size());
  std::vector<double> values;
  Index nrows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_commas(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (static_cast<Index>(cells.size()) != ncols)
      throw DataError(where + ": expected " + std::to_string(ncols) + " columns, got " +
                      std::to_string(cells.size()));
    for (auto c : cells) values.push_back(detail::parse_number(c, where));
    ++nrows;
  }
  Matrix m(nrows, ncols);
  for (Index i = 0; i < nrows; ++i)
    for (Index j = 0; j < ncols; ++j) m(i, j) = values[static_cast<std::size_t>(i * ncols + j)];
  return m;
}

inline void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                              const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

/// Reads one task CSV: covariates first, response in the last column.
inline TaskData read_task_csv(const std::string& id, const std::filesystem::path& path) {
  Matrix m = read_numeric_csv(path);
  if (m.cols() < 2) throw DataError(path.string() + ": need at least one covariate and a response column");
  TaskData t;
  t.id = id;
  t.X = m.leftCols(m.cols() - 1);
  t.y = m.col(m.cols() - 1);
  return t;
}

/// Loads a manifest `{ "loss": ..., "tasks": [ { "id", "path" } ] }`.
/// Task paths are resolved relative to the manifest's directory.
inline MultiTaskDataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || !doc.contains("loss") || !doc.contains("tasks") || !doc["tasks"].is_array())
    throw DataError("manifest " + path.string() + " must contain \"loss\" and a \"tasks\" array");

  MultiTaskDataset ds;
  ds.loss = loss_kind_from_string(doc["loss"].get<std::string>());
  const auto base = path.parent_path();
  for (const auto& entry : doc["tasks"]) {
    if (!entry.contains("id") || !entry.contains("path"))
      throw DataError("manifest task entries need \"id\" and \"path\"");
    std::filesystem::path p = entry["path"].get<std::string>();
    if (p.is_relative()) p = base / p;
    auto task = read_task_csv(entry["id"].get<std::string>(), p);
    if (ds.tasks.empty()) ds.d = task.X.cols();
    if (task.X.cols() != ds.d)
      throw DataError("task '" + task.id + "' has " + std::to_string(task.X.cols()) +
                      " covariates but the first task has " + std::to_string(ds.d));
    ds.tasks.push_back(std::move(task));
  }
  ds.validate();
  return ds;
}

/// Writes `<dir>/<stem>.json` plus one `<stem>_<id>.csv` per task.
/// Returns the manifest path.
inline std::filesystem::path write_manifest(const MultiTaskDataset& ds, const std::filesystem::path& dir,
                                            const std::string& stem) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> header;
  for (Index j = 0; j < ds.d; ++j) header.push_back("x" + std::to_string(j + 1));
  header.push_back("y");
  nlohmann::json doc;
  doc["loss"] = to_string(ds.loss);
  doc["tasks"] = nlohmann::json::array();
  for (const auto& t : ds.tasks) {
    const std::string file = stem + "_" + t.id + ".csv";
    Matrix m(t.X.rows(), ds.d + 1);
    m << t.X, t.y;
    write_numeric_csv(dir / file, header, m);
    doc["tasks"].push_back({{"id", t.id}, {"path", file}});
  }
  auto manifest = dir / (stem + ".json");
  std::ofstream out(manifest);
  if (!out) throw DataError("cannot write " + manifest.string());
  out << doc.dump(2) << '\n';
  return manifest;
}

// ---------------------------------------------------------------------------
// Standardization

struct TaskScaling {
  Vector mean;
  Vector scale;  // population std; 1 for constant columns
  double response_mean = 0.0;
};

struct StandardizationStats {
  std::vector<TaskScaling> tasks;
  bool center_response = false;
  bool constant_column = false;  // warning flag: some column had zero variance
};

/// Per-task z-scoring of covariates. Regression responses are centered; class labels are untouched.
inline std::pair<MultiTaskDataset, StandardizationStats> standardize(const MultiTaskDataset& ds) {
  MultiTaskDataset out = ds;
  StandardizationStats stats;
  stats.center_response = ds.loss == LossKind::squared;
  for (auto& t : out.tasks) {
    TaskScaling s;
    const double n = static_cast<double>(t.X.rows());
    s.mean = t.X.colwise().mean().transpose();
    s.scale.resize(t.X.cols());
    for (Index j = 0; j < t.X.cols(); ++j) {
      const double var = (t.X.col(j).array() - s.mean[j]).square().sum() / n;
      s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
      if (!(var > 0.0)) stats.constant_column = true;
      t.X.col(j) = (t.X.col(j).array() - s.mean[j]) / s.scale[j];
    }
    if (stats.center_response) {
      s.response_mean = t.y.mean();
      t.y.array() -= s.response_mean;
    }
    stats.tasks.push_back(std::move(s));
  }
  return {std::move(out), std::move(stats)};
}

/// Applies task k's stored transform to raw covariates.
inline Matrix apply_scaling(const TaskScaling& s, const Matrix& X) {
  Matrix out = X;
  for (Index j = 0; j < X.cols(); ++j) out.col(j) = (X.col(j).array() - s.mean[j]) / s.scale[j];
  return out;
}

/// Appends an all-ones covariate as the last column of every task.
inline MultiTaskDataset with_intercept(const MultiTaskDataset& ds) {
  MultiTaskDataset out = ds;
  for (auto& t : out.tasks) {
    Matrix X(t.X.rows(), t.X.cols() + 1);
    X << t.X, Vector::Ones(t.X.rows());
    t.X = std::move(X);
  }
  out.d = ds.d + 1;
  return out;
}

/// Selects rows `idx` of every task (the same index list for all tasks).
inline TaskData select_rows(const TaskData& t, const std::vector<Index>& idx) {
  TaskData out;
  out.id = t.id;
  out.X.resize(static_cast<Index>(idx.size()), t.X.cols());
  out.y.resize(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.X.row(static_cast<Index>(i)) = t.X.row(idx[i]);
    out.y[static_cast<Index>(i)] = t.y[idx[i]];
  }
  return out;
}

}  // namespace mssl
