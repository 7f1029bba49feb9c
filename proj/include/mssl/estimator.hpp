#pragma once

#include <optional>

#include "mssl/common.hpp"
#include "mssl/data.hpp"
#include "mssl/glasso_admm.hpp"
#include "mssl/losses.hpp"
#include "mssl/model.hpp"
#include "mssl/wstep.hpp"

namespace mssl {

/// Settings shared by both alternating-minimization variants.
/// `wstep.gamma`, `admm.lambda` and `admm.logdet_coeff` are overwritten by the fit arguments.
struct MsslConfig {
  WStepConfig wstep;
  AdmmConfig admm;
  int max_outer = 50;
  double outer_tol = 1e-5;
  std::optional<double> logdet_coeff;  // defaults to K / 2
  bool fit_intercept = false;
  bool normalize_losses = false;

  void validate() const {
    require(max_outer >= 1, "max_outer must be >= 1");
    require(outer_tol > 0.0, "outer_tol must be > 0");
    require(!logdet_coeff || *logdet_coeff > 0.0, "log-det coefficient must be > 0");
  }
};

/// Column k is y_k - X_k w_k. Needs equal n across tasks and squared loss.
inline Matrix residual_matrix(const Matrix& W, const MultiTaskDataset& ds) {
  if (ds.loss != LossKind::squared)
    throw InvalidArgument("residual structure is only defined for regression (squared loss)");
  if (!ds.equal_sizes()) throw InvalidArgument("residual structure needs the same number of rows in every task");
  if (W.rows() != ds.d || W.cols() != ds.num_tasks()) throw InvalidArgument("residual_matrix: W has the wrong shape");
  const Index n = ds.tasks.front().rows();
  Matrix E(n, ds.num_tasks());
  for (Index k = 0; k < ds.num_tasks(); ++k) E.col(k) = ds.tasks[k].y - ds.tasks[k].X * W.col(k);
  return E;
}

/// Starting point for an alternating fit; the default is W = 0, Omega = I, cold ADMM.
struct WarmStart {
  Matrix W;      // in fit coordinates (intercept row included when fitting one)
  Matrix omega;
  std::optional<AdmmState> admm;
};

/// A fit plus the solver state needed to warm-start a nearby one.
struct FitResult {
  TrainedModel model;
  WarmStart state;
};

namespace detail {

inline Vector l1_row_weights(Index d_fit, bool intercept) {
  Vector w = Vector::Ones(d_fit);
  if (intercept) w[d_fit - 1] = 0.0;
  return w;
}

inline double log_det_pd(const Matrix& omega) {
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) throw NumericError("Omega is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Objective for the data the model was fit on (intercept column already appended).
inline double objective_on_fit_data(const TrainedModel& m, const MultiTaskDataset& fit_ds) {
  const Index K = fit_ds.num_tasks();
  const Index coupled = m.intercept ? fit_ds.d - 1 : fit_ds.d;
  double loss = 0.0;
  for (Index k = 0; k < K; ++k) {
    const auto& t = fit_ds.tasks[k];
    const double a = m.normalize_losses ? 1.0 / static_cast<double>(t.rows()) : 1.0;
    loss += a * loss_value_grad(fit_ds.loss, t.X, t.y, m.W.col(k)).value;
  }
  const double l1w = m.gamma * weighted_l1(m.W, l1_row_weights(fit_ds.d, m.intercept));
  const Matrix& omega = m.precision.omega;
  switch (m.variant) {
    case Variant::independent:
      return loss + l1w;
    case Variant::fixed_structure: {
      const auto Wc = m.W.topRows(coupled);
      return loss + m.coupling_scale * (Wc * omega).cwiseProduct(Wc).sum() + l1w;
    }
    case Variant::p_mssl: {
      const auto Wc = m.W.topRows(coupled);
      const double trace = (Wc * omega).cwiseProduct(Wc).sum();
      return loss + trace - m.logdet_coeff * log_det_pd(omega) + m.lambda * omega.cwiseAbs().sum() + l1w;
    }
    case Variant::r_mssl: {
      const Matrix E = residual_matrix(m.W, fit_ds);
      const double trace = (E * omega).cwiseProduct(E).sum();
      return loss + trace - m.logdet_coeff * log_det_pd(omega) + m.lambda * omega.cwiseAbs().sum() + l1w;
    }
  }
  return 0.0;
}

/// Scalar Omega-step for K = 1: argmin_w  s w - c log w + lambda w.
inline AdmmResult scalar_omega_step(const Matrix& S, double lambda, double c) {
  AdmmResult r;
  r.omega = Matrix::Constant(1, 1, c / (S(0, 0) + lambda));
  r.state.theta = r.omega;
  r.state.Z = r.omega;
  r.state.U = Matrix::Zero(1, 1);
  r.converged = true;
  return r;
}

inline FitResult fit_alternating(const MultiTaskDataset& ds_in, double lambda, double gamma, const MsslConfig& cfg,
                                 Variant variant, const WarmStart* start = nullptr) {
  cfg.validate();
  require(lambda >= 0.0, "lambda must be >= 0");
  require(gamma >= 0.0, "gamma must be >= 0");
  ds_in.validate();
  if (variant == Variant::r_mssl) {
    if (ds_in.loss != LossKind::squared)
      throw InvalidArgument("r-MSSL can only be applied to regression (squared loss); use p-MSSL for classification");
    if (!ds_in.equal_sizes()) throw InvalidArgument("r-MSSL needs the same number of rows in every task");
  }
  const MultiTaskDataset fit_ds = cfg.fit_intercept ? with_intercept(ds_in) : ds_in;
  const Index K = fit_ds.num_tasks();
  const Index d = fit_ds.d;
  const Index coupled = cfg.fit_intercept ? d - 1 : d;

  TrainedModel m;
  m.variant = variant;
  m.loss = fit_ds.loss;
  m.task_ids = fit_ds.ids();
  m.covariates = ds_in.d;
  m.intercept = cfg.fit_intercept;
  m.lambda = lambda;
  m.gamma = gamma;
  m.logdet_coeff = cfg.logdet_coeff.value_or(0.5 * static_cast<double>(K));
  m.normalize_losses = cfg.normalize_losses;
  m.W = Matrix::Zero(d, K);
  m.precision.omega = Matrix::Identity(K, K);
  std::optional<AdmmState> warm;
  if (start) {
    if (start->W.rows() != d || start->W.cols() != K || start->omega.rows() != K || start->omega.cols() != K)
      throw InvalidArgument("warm start has the wrong shape");
    m.W = start->W;
    m.precision.omega = start->omega;
    warm = start->admm;
    if (warm) m.precision.support = support_of(warm->Z);
  }

  WStepConfig wcfg = cfg.wstep;
  wcfg.gamma = gamma;
  AdmmConfig acfg = cfg.admm;
  acfg.lambda = lambda;
  acfg.logdet_coeff = m.logdet_coeff;
  SmoothOptions sopts;
  sopts.coupling = variant == Variant::r_mssl ? CouplingKind::residual : CouplingKind::parameter;
  sopts.coupled_rows = coupled;
  sopts.normalize_losses = cfg.normalize_losses;
  const Vector row_weights = l1_row_weights(d, cfg.fit_intercept);

  double F = objective_on_fit_data(m, fit_ds);
  m.objective_trace.push_back(F);
  bool inner_ok = true;
  for (int t = 1; t <= cfg.max_outer; ++t) {
    m.outer_iterations = t;
    SmoothPart f(fit_ds, m.precision.omega, sopts);
    auto [W_next, wdiag] = fista_solve(f, row_weights, wcfg, m.W);
    m.W = std::move(W_next);
    bool step_ok = wdiag.converged;

    const Matrix S = variant == Variant::r_mssl ? scatter(residual_matrix(m.W, fit_ds)) : scatter(m.W.topRows(coupled));
    AdmmResult ar = K == 1 ? scalar_omega_step(S, lambda, m.logdet_coeff) : admm_solve(S, acfg, warm);
    step_ok = step_ok && ar.converged;
    // Keep the previous Omega if the inexact ADMM iterate is not an improvement.
    if (omega_objective(S, ar.omega, lambda, m.logdet_coeff) <=
        omega_objective(S, m.precision.omega, lambda, m.logdet_coeff)) {
      m.precision.omega = ar.omega;
      m.precision.support = ar.support;
    }
    warm = std::move(ar.state);

    const double F_next = objective_on_fit_data(m, fit_ds);
    if (!std::isfinite(F_next)) throw NumericError("objective is not finite at outer iteration " + std::to_string(t));
    m.objective_trace.push_back(F_next);
    const double decrease = F - F_next;
    F = F_next;
    inner_ok = step_ok;
    if (decrease <= cfg.outer_tol * std::max(std::abs(F), 1.0)) {
      m.converged = true;
      break;
    }
  }
  m.converged = m.converged && inner_ok;
  WarmStart next{m.W, m.precision.omega, std::move(warm)};
  return {std::move(m), std::move(next)};
}

}  // namespace detail

/// Full objective of `model` on `ds` (the dataset it was trained on, before any intercept column).
inline double total_objective(const TrainedModel& model, const MultiTaskDataset& ds) {
  if (ds.num_tasks() != model.num_tasks() || ds.d != model.covariates)
    throw InvalidArgument("total_objective: model and dataset dimensions differ");
  return model.intercept ? detail::objective_on_fit_data(model, with_intercept(ds))
                         : detail::objective_on_fit_data(model, ds);
}

/// Alternates the W-step (fixed Omega) and the graphical-lasso Omega-step on the
/// scatter of W's rows, starting from Omega = I, W = 0.
inline TrainedModel fit_p_mssl(const MultiTaskDataset& ds, double lambda, double gamma, const MsslConfig& cfg = {}) {
  return detail::fit_alternating(ds, lambda, gamma, cfg, Variant::p_mssl).model;
}

/// Like fit_p_mssl but the precision is placed on the residual rows E (regression only).
inline TrainedModel fit_r_mssl(const MultiTaskDataset& ds, double lambda, double gamma, const MsslConfig& cfg = {}) {
  return detail::fit_alternating(ds, lambda, gamma, cfg, Variant::r_mssl).model;
}

inline TrainedModel fit_mssl(Variant v, const MultiTaskDataset& ds, double lambda, double gamma,
                             const MsslConfig& cfg = {}) {
  if (v != Variant::p_mssl && v != Variant::r_mssl)
    throw InvalidArgument("fit_mssl: variant must be p-mssl or r-mssl");
  return detail::fit_alternating(ds, lambda, gamma, cfg, v).model;
}

/// fit_mssl from an explicit starting point (e.g. the neighbouring value on a lambda path).
inline FitResult fit_mssl_from(Variant v, const MultiTaskDataset& ds, double lambda, double gamma,
                               const MsslConfig& cfg, const WarmStart* start) {
  if (v != Variant::p_mssl && v != Variant::r_mssl)
    throw InvalidArgument("fit_mssl: variant must be p-mssl or r-mssl");
  return detail::fit_alternating(ds, lambda, gamma, cfg, v, start);
}

/// Partial correlation -Omega_ab / sqrt(Omega_aa Omega_bb).
inline double partial_correlation(const Matrix& omega, Index a, Index b) {
  return -omega(a, b) / std::sqrt(omega(a, a) * omega(b, b));
}

}  // namespace mssl
