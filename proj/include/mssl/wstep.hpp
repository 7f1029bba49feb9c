#pragma once

#include <concepts>
#include <limits>
#include <optional>

#include "mssl/common.hpp"
#include "mssl/data.hpp"
#include "mssl/losses.hpp"
#include "mssl/prox.hpp"

namespace mssl {

struct BacktrackingConfig {
  bool enabled = true;
  double shrink = 0.5;        // step <- shrink * step on a failed sufficient-decrease test
  double initial_step = 1.0;  // <= 0 means start from 1 / lipschitz_bound()
};

struct WStepConfig {
  double gamma = 0.0;
  int max_iters = 5000;
  double tol = 1e-10;  // relative objective decrease
  double subgradient_tol = 1e-4;  // a small decrease only counts as convergence below this optimality residual
  BacktrackingConfig backtracking;

  void validate() const {
    require(gamma >= 0.0, "W-step: gamma must be >= 0");
    require(max_iters >= 1, "W-step: max_iters must be >= 1");
    require(tol > 0.0, "W-step: tol must be > 0");
    require(backtracking.shrink > 0.0 && backtracking.shrink < 1.0, "W-step: shrink factor must lie in (0,1)");
  }
};

struct WStepDiagnostics {
  int iterations = 0;
  int restarts = 0;
  bool converged = false;
  double step = 0.0;
  double subgradient_inf = 0.0;  // inf-norm of the minimal-norm subgradient at the returned W
  std::vector<double> objective_trace;
};

/// How the precision matrix enters the W-subproblem.
enum class CouplingKind {
  parameter,  // scale * Tr(W_c Omega W_c^T), W_c = the first `coupled_rows` rows of W
  residual,   // scale * Tr(E Omega E^T), E = [y_k - X_k w_k]
};

struct SmoothOptions {
  CouplingKind coupling = CouplingKind::parameter;
  double coupling_scale = 1.0;
  Index coupled_rows = -1;  // parameter coupling only; -1 couples every row
  bool normalize_losses = false;  // weight task k's loss by 1/n_k
};

/// The differentiable part of the W-subproblem for a fixed Omega:
///   f(W) = sum_k a_k L_k(w_k) + coupling(W, Omega).
///
/// Squared-loss tasks are evaluated through cached Gram matrices
/// (X^T X, X^T y), so iterations do not touch the raw data.
class SmoothPart {
 public:
  SmoothPart(const MultiTaskDataset& ds, Matrix omega, SmoothOptions opts = {})
      : ds_(&ds), omega_(std::move(omega)), opts_(opts) {
    const Index K = ds.num_tasks();
    if (omega_.rows() != K || omega_.cols() != K)
      throw InvalidArgument("W-step: Omega must be K x K with K = " + std::to_string(K));
    if (!is_symmetric(omega_, 1e-10)) throw InvalidArgument("W-step: Omega is not symmetric (tol 1e-10)");
    if (opts_.coupled_rows < 0 || opts_.coupled_rows > ds.d) opts_.coupled_rows = ds.d;
    if (opts_.coupling == CouplingKind::residual) {
      if (ds.loss != LossKind::squared) throw InvalidArgument("residual coupling requires squared loss");
      if (!ds.equal_sizes()) throw InvalidArgument("residual coupling requires equal n across tasks");
    }
    weights_.resize(K);
    for (Index k = 0; k < K; ++k)
      weights_[k] = opts_.normalize_losses ? 1.0 / static_cast<double>(ds.tasks[k].rows()) : 1.0;
    if (ds.loss == LossKind::squared && opts_.coupling == CouplingKind::parameter) {
      gram_.reserve(ds.tasks.size());
      xty_.reserve(ds.tasks.size());
      yty_.reserve(ds.tasks.size());
      for (const auto& t : ds.tasks) {
        gram_.push_back(t.X.transpose() * t.X);
        xty_.push_back(t.X.transpose() * t.y);
        yty_.push_back(t.y.squaredNorm());
      }
    }
  }

  const Matrix& omega() const { return omega_; }
  const SmoothOptions& options() const { return opts_; }
  Index rows() const { return ds_->d; }
  Index cols() const { return ds_->num_tasks(); }

  double value(const Matrix& W) const {
    return evaluate(W, nullptr);
  }

  Matrix gradient(const Matrix& W) const {
    Matrix G;
    evaluate(W, &G);
    return G;
  }

  double value_and_gradient(const Matrix& W, Matrix& G) const { return evaluate(W, &G); }

  /// Upper bound on the Lipschitz constant of the gradient.
  double lipschitz_bound() const {
    double data = 0.0;
    for (Index k = 0; k < cols(); ++k) {
      const auto& X = ds_->tasks[k].X;
      Eigen::SelfAdjointEigenSolver<Matrix> es(X.transpose() * X, Eigen::EigenvaluesOnly);
      double lk = es.eigenvalues().maxCoeff() * weights_[k];
      if (ds_->loss == LossKind::logistic) lk *= 0.25;
      data = std::max(data, lk);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eo(omega_, Eigen::EigenvaluesOnly);
    const double om = std::max(0.0, eo.eigenvalues().maxCoeff());
    if (opts_.coupling == CouplingKind::parameter) return data + 2.0 * opts_.coupling_scale * om;
    // residual: Hessian block is X_k^T (a_k I + 2 s Omega)_{kk'} X_k'
    double xmax = 0.0;
    for (const auto& t : ds_->tasks) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(t.X.transpose() * t.X, Eigen::EigenvaluesOnly);
      xmax = std::max(xmax, es.eigenvalues().maxCoeff());
    }
    return xmax * (weights_.maxCoeff() + 2.0 * opts_.coupling_scale * om);
  }

 private:
  double evaluate(const Matrix& W, Matrix* G) const {
    const Index K = cols();
    const Index d = rows();
    if (W.rows() != d || W.cols() != K) throw InvalidArgument("W-step: W has the wrong shape");
    if (G) G->resize(d, K);
    double value = 0.0;

    if (opts_.coupling == CouplingKind::residual) {
      const Index n = ds_->tasks.front().rows();
      Matrix E(n, K);
      for (Index k = 0; k < K; ++k) E.col(k) = ds_->tasks[k].y - ds_->tasks[k].X * W.col(k);
      const Matrix EO = E * omega_;
      for (Index k = 0; k < K; ++k) value += 0.5 * weights_[k] * E.col(k).squaredNorm();
      value += opts_.coupling_scale * (E.array() * EO.array()).sum();
      if (G)
        for (Index k = 0; k < K; ++k)
          G->col(k) = -(ds_->tasks[k].X.transpose() *
                        (weights_[k] * E.col(k) + 2.0 * opts_.coupling_scale * EO.col(k)));
      return value;
    }

    for (Index k = 0; k < K; ++k) {
      const auto w = W.col(k);
      if (!gram_.empty()) {
        const Vector gw = gram_[k] * w;
        value += weights_[k] * (0.5 * w.dot(gw) - xty_[k].dot(w) + 0.5 * yty_[k]);
        if (G) G->col(k) = weights_[k] * (gw - xty_[k]);
      } else {
        auto le = loss_value_grad(ds_->loss, ds_->tasks[k].X, ds_->tasks[k].y, w);
        value += weights_[k] * le.value;
        if (G) G->col(k) = weights_[k] * le.grad;
      }
    }
    const Index dc = opts_.coupled_rows;
    if (dc > 0 && opts_.coupling_scale != 0.0) {
      const auto Wc = W.topRows(dc);
      const Matrix WO = Wc * omega_;
      value += opts_.coupling_scale * (Wc.array() * WO.array()).sum();
      if (G) G->topRows(dc) += 2.0 * opts_.coupling_scale * WO;
    }
    return value;
  }

  const MultiTaskDataset* ds_;
  Matrix omega_;
  SmoothOptions opts_;
  Vector weights_;
  std::vector<Matrix> gram_;
  std::vector<Vector> xty_;
  std::vector<double> yty_;
};

/// Row-weighted l1 norm: sum_j row_weight_j * sum_k |W_jk|.
inline double weighted_l1(const Matrix& W, const Vector& row_weights) {
  return (W.cwiseAbs().rowwise().sum().array() * row_weights.array()).sum();
}

/// Inf-norm of the minimal-norm element of grad + gamma * diag(row_weights) * d|W|.
inline double min_norm_subgradient_inf(const Matrix& W, const Matrix& grad, double gamma, const Vector& row_weights) {
  double worst = 0.0;
  for (Index j = 0; j < W.rows(); ++j) {
    const double t = gamma * row_weights[j];
    for (Index k = 0; k < W.cols(); ++k) {
      const double g = grad(j, k);
      double r;
      if (W(j, k) > 0.0) r = g + t;
      else if (W(j, k) < 0.0) r = g - t;
      else r = std::max(std::abs(g) - t, 0.0);
      worst = std::max(worst, std::abs(r));
    }
  }
  return worst;
}

/// Accelerated proximal gradient for  min_W f(W) + gamma * sum_j row_weights_j ||W_j.||_1.
///
/// `Smooth` needs `double value(const Matrix&)`,
/// `double value_and_gradient(const Matrix&, Matrix&)` and `double lipschitz_bound()`.
/// Momentum restarts whenever an accelerated step would increase the objective,
/// so the recorded objective trace never increases.
template <class Smooth>
  requires requires(const Smooth& s, const Matrix& m, Matrix& g) {
    { s.value(m) } -> std::convertible_to<double>;
    { s.value_and_gradient(m, g) } -> std::convertible_to<double>;
    { s.lipschitz_bound() } -> std::convertible_to<double>;
  }
std::pair<Matrix, WStepDiagnostics> fista_solve(const Smooth& f, const Vector& row_weights, const WStepConfig& cfg,
                                                Matrix W0) {
  cfg.validate();
  if (!W0.allFinite()) throw InvalidArgument("W-step: initial W is not finite");
  if (row_weights.size() != W0.rows()) throw InvalidArgument("W-step: row weight length mismatch");

  const double gamma = cfg.gamma;
  auto prox = [&](const Matrix& V, double step) {
    Matrix Z(V.rows(), V.cols());
    for (Index j = 0; j < V.rows(); ++j) {
      const double t = step * gamma * row_weights[j];
      for (Index k = 0; k < V.cols(); ++k) Z(j, k) = soft_threshold(V(j, k), t);
    }
    return Z;
  };
  auto penalty = [&](const Matrix& W) { return gamma == 0.0 ? 0.0 : gamma * weighted_l1(W, row_weights); };

  WStepDiagnostics diag;
  double step = cfg.backtracking.initial_step;
  if (!cfg.backtracking.enabled || step <= 0.0) step = 1.0 / std::max(f.lipschitz_bound(), 1e-300);

  Matrix x = std::move(W0);
  double Fx = f.value(x) + penalty(x);
  if (!std::isfinite(Fx)) throw NumericError("W-step: objective is not finite at the initial point");
  diag.objective_trace.push_back(Fx);

  Matrix y = x;
  double t = 1.0;
  Matrix g;
  bool restarted = false;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    diag.iterations = it;
    const double fy = f.value_and_gradient(y, g);
    Matrix z;
    double fz = 0.0;
    for (;;) {
      z = prox(y - step * g, step);
      fz = f.value(z);
      if (!cfg.backtracking.enabled) break;
      const Matrix dz = z - y;
      const double model = fy + (g.array() * dz.array()).sum() + dz.squaredNorm() / (2.0 * step);
      if (std::isfinite(fz) && fz <= model + 1e-12 * std::abs(model)) break;
      step *= cfg.backtracking.shrink;
      if (step < 1e-300) throw NumericError("W-step: step size underflow at iteration " + std::to_string(it));
    }
    const double Fz = fz + penalty(z);
    if (!std::isfinite(Fz))
      throw NumericError("W-step: objective diverged at iteration " + std::to_string(it));

    if (Fz > Fx) {
      if (restarted) {  // a plain proximal step from x could not decrease F
        diag.converged = true;
        diag.objective_trace.push_back(Fx);
        break;
      }
      y = x;
      t = 1.0;
      restarted = true;
      ++diag.restarts;
      diag.objective_trace.push_back(Fx);
      continue;
    }
    restarted = false;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = z + ((t - 1.0) / t_next) * (z - x);
    t = t_next;
    const double decrease = Fx - Fz;
    x = std::move(z);
    Fx = Fz;
    diag.objective_trace.push_back(Fx);
    if (decrease <= cfg.tol * std::max(std::abs(Fx), 1.0)) {
      Matrix gx;
      f.value_and_gradient(x, gx);
      if (min_norm_subgradient_inf(x, gx, gamma, row_weights) <= cfg.subgradient_tol) {
        diag.converged = true;
        break;
      }
    }
  }
  diag.step = step;
  Matrix gx;
  f.value_and_gradient(x, gx);
  diag.subgradient_inf = min_norm_subgradient_inf(x, gx, gamma, row_weights);
  return {std::move(x), std::move(diag)};
}

// ---------------------------------------------------------------------------
// Parameter-coupled W-step: sum_k L_k(w_k) + Tr(W Omega W^T) + gamma ||W||_1

/// Gradient of sum_k L_k(w_k) + Tr(W Omega W^T): column k is grad L_k + 2 (W Omega)_{:,k}.
inline Matrix smooth_grad(const Matrix& W, const Matrix& omega, const MultiTaskDataset& ds) {
  return SmoothPart(ds, omega).gradient(W);
}

inline double wstep_objective(const Matrix& W, const Matrix& omega, const MultiTaskDataset& ds, double gamma) {
  return SmoothPart(ds, omega).value(W) + gamma * W.cwiseAbs().sum();
}

inline std::pair<Matrix, WStepDiagnostics> fista_solve(const MultiTaskDataset& ds, const Matrix& omega,
                                                       const WStepConfig& cfg,
                                                       std::optional<Matrix> W0 = std::nullopt) {
  SmoothPart f(ds, omega);
  Matrix start = W0 ? *W0 : Matrix::Zero(ds.d, ds.num_tasks());
  return fista_solve(f, Vector::Ones(ds.d), cfg, std::move(start));
}

}  // namespace mssl
