#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>

#include "mssl/common.hpp"
#include "mssl/data.hpp"
#include "mssl/losses.hpp"

namespace mssl {

enum class Variant { p_mssl, r_mssl, fixed_structure, independent };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::p_mssl: return "p-mssl";
    case Variant::r_mssl: return "r-mssl";
    case Variant::fixed_structure: return "fixed-structure";
    case Variant::independent: return "independent";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "p-mssl") return Variant::p_mssl;
  if (s == "r-mssl") return Variant::r_mssl;
  if (s == "fixed-structure") return Variant::fixed_structure;
  if (s == "independent") return Variant::independent;
  throw InvalidArgument("unknown variant '" + s + "' (expected p-mssl, r-mssl, fixed-structure or independent)");
}

/// Task precision matrix: numeric Omega (dense, PD) and the sparse support it was read from.
struct PrecisionMatrix {
  Matrix omega;
  EdgeSet support;
};

/// Everything needed to predict with, inspect, or re-score a fit.
///
/// W has one row per covariate plus a trailing intercept row when `intercept` is set.
/// For the fixed-structure variant `precision.omega` holds the fixed (PSD) coupling matrix.
struct TrainedModel {
  Variant variant = Variant::p_mssl;
  LossKind loss = LossKind::squared;
  std::vector<std::string> task_ids;
  Index covariates = 0;
  bool intercept = false;
  Matrix W;
  PrecisionMatrix precision;
  double lambda = 0.0;
  double gamma = 0.0;
  double logdet_coeff = 1.0;
  double coupling_scale = 1.0;
  bool normalize_losses = false;
  std::optional<StandardizationStats> standardization;
  std::vector<double> objective_trace;
  bool converged = false;
  int outer_iterations = 0;

  Index num_tasks() const { return W.cols(); }
};

/// Predictions for raw covariates of task `k`: X w_k (regression) or sigma(X w_k) (classification).
/// Stored standardization is applied to X first and the response mean is added back.
inline Vector predict(const TrainedModel& model, Index k, const Matrix& X) {
  if (k < 0 || k >= model.num_tasks())
    throw InvalidArgument("predict: task index " + std::to_string(k) + " out of range");
  if (X.cols() != model.covariates)
    throw InvalidArgument("predict: expected " + std::to_string(model.covariates) + " covariates, got " +
                          std::to_string(X.cols()));
  Matrix Z = model.standardization ? apply_scaling(model.standardization->tasks[static_cast<std::size_t>(k)], X) : X;
  if (model.intercept) {
    Matrix aug(Z.rows(), Z.cols() + 1);
    aug << Z, Vector::Ones(Z.rows());
    Z = std::move(aug);
  }
  Vector eta = Z * model.W.col(k);
  if (model.loss == LossKind::logistic) return eta.unaryExpr([](double v) { return sigmoid(v); });
  if (model.standardization && model.standardization->center_response)
    eta.array() += model.standardization->tasks[static_cast<std::size_t>(k)].response_mean;
  return eta;
}

/// Class labels at probability threshold 0.5.
inline Vector predict_labels(const TrainedModel& model, Index k, const Matrix& X) {
  return predict(model, k, X).unaryExpr([](double p) { return p >= 0.5 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Index rows, Index cols, const char* what) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw DataError(std::string("model JSON: ") + what + " has the wrong number of rows");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw DataError(std::string("model JSON: ") + what + " row " + std::to_string(i) + " has the wrong length");
    for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector vector_from_json(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = "mssl-model";
  j["version"] = 1;
  j["variant"] = to_string(m.variant);
  j["loss"] = to_string(m.loss);
  j["tasks"] = m.num_tasks();
  j["covariates"] = m.covariates;
  j["intercept"] = m.intercept;
  j["task_ids"] = m.task_ids;
  j["lambda"] = m.lambda;
  j["gamma"] = m.gamma;
  j["logdet_coeff"] = m.logdet_coeff;
  j["coupling_scale"] = m.coupling_scale;
  j["normalize_losses"] = m.normalize_losses;
  j["W"] = detail::matrix_to_json(m.W);
  j["Omega"] = detail::matrix_to_json(m.precision.omega);
  auto support = nlohmann::json::array();
  for (const auto& [a, b] : m.precision.support) support.push_back({a, b});
  j["support"] = std::move(support);
  if (m.standardization) {
    nlohmann::json s;
    s["center_response"] = m.standardization->center_response;
    s["constant_column"] = m.standardization->constant_column;
    s["tasks"] = nlohmann::json::array();
    for (const auto& t : m.standardization->tasks)
      s["tasks"].push_back({{"mean", detail::vector_to_json(t.mean)},
                            {"scale", detail::vector_to_json(t.scale)},
                            {"response_mean", t.response_mean}});
    j["standardization"] = std::move(s);
  } else {
    j["standardization"] = nullptr;
  }
  j["objective_trace"] = m.objective_trace;
  j["converged"] = m.converged;
  j["outer_iterations"] = m.outer_iterations;
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != "mssl-model") throw DataError("not an mssl model document");
    TrainedModel m;
    m.variant = variant_from_string(j.at("variant").get<std::string>());
    m.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    const auto K = j.at("tasks").get<Index>();
    m.covariates = j.at("covariates").get<Index>();
    m.intercept = j.at("intercept").get<bool>();
    m.task_ids = j.at("task_ids").get<std::vector<std::string>>();
    if (static_cast<Index>(m.task_ids.size()) != K) throw DataError("model JSON: task_ids length mismatch");
    m.lambda = j.at("lambda").get<double>();
    m.gamma = j.at("gamma").get<double>();
    m.logdet_coeff = j.at("logdet_coeff").get<double>();
    m.coupling_scale = j.value("coupling_scale", 1.0);
    m.normalize_losses = j.value("normalize_losses", false);
    m.W = detail::matrix_from_json(j.at("W"), m.covariates + (m.intercept ? 1 : 0), K, "W");
    m.precision.omega = detail::matrix_from_json(j.at("Omega"), K, K, "Omega");
    for (const auto& e : j.at("support")) {
      const int a = e.at(0).get<int>(), b = e.at(1).get<int>();
      if (a < 0 || b < 0 || a >= K || b >= K) throw DataError("model JSON: support index out of range");
      m.precision.support.push_back(make_edge(a, b));
    }
    m.precision.support = normalize_edges(std::move(m.precision.support));
    const auto& s = j.at("standardization");
    if (!s.is_null()) {
      StandardizationStats st;
      st.center_response = s.at("center_response").get<bool>();
      st.constant_column = s.value("constant_column", false);
      for (const auto& t : s.at("tasks")) {
        TaskScaling ts;
        ts.mean = detail::vector_from_json(t.at("mean"));
        ts.scale = detail::vector_from_json(t.at("scale"));
        ts.response_mean = t.at("response_mean").get<double>();
        if (ts.mean.size() != m.covariates || ts.scale.size() != m.covariates)
          throw DataError("model JSON: standardization vector length mismatch");
        st.tasks.push_back(std::move(ts));
      }
      if (static_cast<Index>(st.tasks.size()) != K) throw DataError("model JSON: standardization task count mismatch");
      m.standardization = std::move(st);
    }
    m.objective_trace = j.at("objective_trace").get<std::vector<double>>();
    m.converged = j.at("converged").get<bool>();
    m.outer_iterations = j.value("outer_iterations", 0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model JSON: ") + e.what());
  }
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model " + path.string() + " is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace mssl
