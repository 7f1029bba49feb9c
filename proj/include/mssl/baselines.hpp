#pragma once

#include "mssl/common.hpp"
#include "mssl/data.hpp"
#include "mssl/estimator.hpp"
#include "mssl/model.hpp"
#include "mssl/wstep.hpp"

namespace mssl {

struct BaselineFit {
  Matrix W;
  bool ridge_fallback = false;  // some task needed the 1e-10 ridge to solve its normal equations
};

inline constexpr double kRidgeFallback = 1e-10;

/// Each task on its own: normal equations for gamma = 0 regression, otherwise the
/// proximal solver with Omega = 0.
inline BaselineFit fit_independent(const MultiTaskDataset& ds, double gamma, const WStepConfig& wcfg = {}) {
  require(gamma >= 0.0, "fit_independent: gamma must be >= 0");
  ds.validate();
  const Index K = ds.num_tasks();
  BaselineFit out;
  if (ds.loss == LossKind::squared && gamma == 0.0) {
    out.W.resize(ds.d, K);
    for (Index k = 0; k < K; ++k) {
      const auto& t = ds.tasks[k];
      const Matrix G = t.X.transpose() * t.X;
      const Vector b = t.X.transpose() * t.y;
      Eigen::LLT<Matrix> llt(G);
      if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 1e-12).all()) {
        out.W.col(k) = llt.solve(b);
        continue;
      }
      out.ridge_fallback = true;
      Eigen::LDLT<Matrix> ldlt(G + kRidgeFallback * Matrix::Identity(ds.d, ds.d));
      if (ldlt.info() != Eigen::Success) throw NumericError("fit_independent: singular system for task '" + t.id + "'");
      out.W.col(k) = ldlt.solve(b);
      if (!out.W.col(k).allFinite()) throw NumericError("fit_independent: singular system for task '" + t.id + "'");
    }
    return out;
  }
  WStepConfig cfg = wcfg;
  cfg.gamma = gamma;
  out.W = fista_solve(ds, Matrix::Zero(K, K), cfg).first;
  return out;
}

/// Equal-weight combination: the row-wise mean of the covariates.
inline Vector average_predict(const Matrix& X) {
  require(X.cols() >= 1, "average_predict: need at least one covariate");
  return X.rowwise().mean();
}

/// Per task, the one covariate whose direct use as a prediction has the lowest training RMSE.
inline Matrix fit_best_covariate(const MultiTaskDataset& ds) {
  Matrix W = Matrix::Zero(ds.d, ds.num_tasks());
  for (Index k = 0; k < ds.num_tasks(); ++k) {
    const auto& t = ds.tasks[k];
    Index best = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < ds.d; ++j) {
      const double err = (t.X.col(j) - t.y).squaredNorm();
      if (err < best_err) {
        best_err = err;
        best = j;
      }
    }
    W(best, k) = 1.0;
  }
  return W;
}

/// Graph Laplacian (degree minus adjacency) and the edges it was built from.
struct LaplacianSpec {
  Matrix L;
  EdgeSet edges;
};

inline LaplacianSpec laplacian_from_edges(Index K, EdgeSet edges) {
  require(K >= 1, "laplacian: need at least one node");
  LaplacianSpec spec;
  spec.edges = normalize_edges(std::move(edges));
  spec.L = Matrix::Zero(K, K);
  for (const auto& [a, b] : spec.edges) {
    require(a >= 0 && b < K, "laplacian: edge index out of range");
    spec.L(a, b) -= 1.0;
    spec.L(b, a) -= 1.0;
    spec.L(a, a) += 1.0;
    spec.L(b, b) += 1.0;
  }
  return spec;
}

/// 4-neighbour grid; node index r * cols + c.
inline LaplacianSpec grid_laplacian(Index rows, Index cols) {
  require(rows >= 1 && cols >= 1, "grid_laplacian: dimensions must be positive");
  EdgeSet edges;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      const int node = static_cast<int>(r * cols + c);
      if (c + 1 < cols) edges.emplace_back(node, node + 1);
      if (r + 1 < rows) edges.emplace_back(node, static_cast<int>(node + cols));
    }
  return laplacian_from_edges(rows * cols, std::move(edges));
}

/// One W-step with Omega fixed to `scale * L` (spatially smoothed multi-model regression).
inline Matrix fit_fixed_structure(const MultiTaskDataset& ds, const LaplacianSpec& L, double gamma,
                                  double scale = 1.0, const WStepConfig& wcfg = {}) {
  ds.validate();
  if (L.L.rows() != ds.num_tasks() || L.L.cols() != ds.num_tasks())
    throw InvalidArgument("fit_fixed_structure: Laplacian must be K x K");
  require(gamma >= 0.0, "fit_fixed_structure: gamma must be >= 0");
  SmoothOptions opts;
  opts.coupling_scale = scale;
  SmoothPart f(ds, L.L, opts);
  WStepConfig cfg = wcfg;
  cfg.gamma = gamma;
  return fista_solve(f, Vector::Ones(ds.d), cfg, Matrix::Zero(ds.d, ds.num_tasks())).first;
}

/// Wraps baseline weights so they can be evaluated, predicted with and serialized like an MSSL fit.
inline TrainedModel make_baseline_model(const MultiTaskDataset& ds, Matrix W, Variant variant, double gamma = 0.0,
                                        Matrix coupling = {}, double scale = 1.0) {
  TrainedModel m;
  m.variant = variant;
  m.loss = ds.loss;
  m.task_ids = ds.ids();
  m.covariates = ds.d;
  m.W = std::move(W);
  m.gamma = gamma;
  m.coupling_scale = scale;
  m.precision.omega = coupling.size() ? std::move(coupling) : Matrix::Zero(ds.num_tasks(), ds.num_tasks());
  m.converged = true;
  return m;
}

}  // namespace mssl
