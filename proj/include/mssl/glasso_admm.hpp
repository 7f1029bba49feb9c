#pragma once

#include <limits>
#include <optional>

#include "mssl/common.hpp"
#include "mssl/prox.hpp"

namespace mssl {

/// ADMM for  min_{Omega > 0}  Tr(S Omega) - c log|Omega| + lambda ||Omega||_1.
///
/// The l1 term covers every entry, diagonal included. `logdet_coeff` is c.
struct AdmmConfig {
  double lambda = 0.0;
  double rho = 1.0;
  double logdet_coeff = 1.0;
  int max_iters = 1000;
  double eps_abs = 1e-6;
  double eps_rel = 1e-4;

  void validate() const {
    require(lambda >= 0.0, "ADMM: lambda must be >= 0");
    require(rho > 0.0, "ADMM: rho must be > 0");
    require(logdet_coeff > 0.0, "ADMM: log-det coefficient must be > 0");
    require(max_iters >= 1, "ADMM: max_iters must be >= 1");
    require(eps_abs > 0.0 && eps_rel > 0.0, "ADMM: tolerances must be > 0");
  }
};

struct AdmmState {
  Matrix theta;
  Matrix Z;
  Matrix U;  // scaled dual variable
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct AdmmResult {
  Matrix omega;     // final Theta (positive definite)
  EdgeSet support;  // off-diagonal nonzeros of Z
  AdmmState state;
  bool converged = false;
};

/// What one Theta update saw: eigenvalues of rho (Z - U) - S and the resulting Theta eigenvalues.
struct ThetaUpdateInfo {
  int iteration = 0;
  Vector rhs_eigenvalues;
  Vector theta_eigenvalues;
};

struct NoObserver {
  void operator()(const ThetaUpdateInfo&) const {}
};

/// S = M^T M, symmetrized.
inline Matrix scatter(const Matrix& M) {
  Matrix S = M.transpose() * M;
  return 0.5 * (S + S.transpose());
}

/// Closed-form positive root of rho theta - c / theta = lam.
inline double theta_eigen_root(double lam, double rho, double c) {
  return (lam + std::sqrt(lam * lam + 4.0 * rho * c)) / (2.0 * rho);
}

/// argmin_{Theta > 0} Tr(S Theta) - c log|Theta| + rho/2 ||Theta - Z + U||_F^2.
///
/// Stationarity gives rho Theta - c Theta^{-1} = rho (Z - U) - S; solved in the eigenbasis
/// of the right-hand side. Optional outputs receive both eigenvalue sets.
inline Matrix theta_update(const Matrix& S, const Matrix& Z, const Matrix& U, double rho, double c,
                           Vector* rhs_eigenvalues = nullptr, Vector* theta_eigenvalues = nullptr) {
  require(rho > 0.0 && c > 0.0, "theta_update: rho and c must be > 0");
  Matrix rhs = rho * (Z - U) - S;
  const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  if (!is_symmetric(rhs, 1e-10 * scale)) throw InvalidArgument("theta_update: inputs are not symmetric");
  rhs = 0.5 * (rhs + rhs.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(rhs);
  if (es.info() != Eigen::Success) throw NumericError("theta_update: eigendecomposition failed");
  const Vector& lam = es.eigenvalues();
  Vector theta(lam.size());
  for (Index i = 0; i < lam.size(); ++i) theta[i] = theta_eigen_root(lam[i], rho, c);
  const Matrix& Q = es.eigenvectors();
  Matrix out = Q * theta.asDiagonal() * Q.transpose();
  out = 0.5 * (out + out.transpose());
  if (rhs_eigenvalues) *rhs_eigenvalues = lam;
  if (theta_eigenvalues) *theta_eigenvalues = std::move(theta);
  return out;
}

/// Element-wise soft-threshold of Theta + U at lambda / rho.
inline Matrix z_update(const Matrix& theta, const Matrix& U, double lambda, double rho) {
  require(rho > 0.0, "z_update: rho must be > 0");
  return soft_threshold(theta + U, lambda / rho);
}

/// Off-diagonal nonzeros of a symmetric sparse iterate.
inline EdgeSet support_of(const Matrix& Z) {
  EdgeSet out;
  for (Index i = 0; i < Z.rows(); ++i)
    for (Index j = i + 1; j < Z.cols(); ++j)
      if (Z(i, j) != 0.0 || Z(j, i) != 0.0) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return out;
}

/// Tr(S Omega) - c log|Omega| + lambda ||Omega||_1; +inf when Omega is not PD.
inline double omega_objective(const Matrix& S, const Matrix& omega, double lambda, double c) {
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return (S.array() * omega.array()).sum() - c * logdet + lambda * omega.cwiseAbs().sum();
}

/// Inf-norm of the smallest KKT residual S - c Omega^{-1} + lambda G over valid subgradients G,
/// with the sign pattern read from Z (G_ij = sign(Z_ij) on the support, free in [-1, 1] elsewhere).
inline double kkt_residual(const Matrix& S, const Matrix& omega, const Matrix& Z, double lambda, double c) {
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const Matrix inv = llt.solve(Matrix::Identity(omega.rows(), omega.cols()));
  const Matrix A = S - c * inv;
  double worst = 0.0;
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j) {
      double r;
      if (Z(i, j) > 0.0) r = std::abs(A(i, j) + lambda);
      else if (Z(i, j) < 0.0) r = std::abs(A(i, j) - lambda);
      else r = std::max(std::abs(A(i, j)) - lambda, 0.0);
      worst = std::max(worst, r);
    }
  return worst;
}

/// Runs the Theta / Z / U iteration from the warm state (or Z = U = 0).
///
/// Stops when ||Theta - Z||_F <= eps_pri and rho ||Z - Z_prev||_F <= eps_dual. If max_iters is
/// hit first, the iterate with the lowest objective is returned with converged = false.
template <class Observer = NoObserver>
AdmmResult admm_solve(const Matrix& S, const AdmmConfig& cfg, const std::optional<AdmmState>& warm = std::nullopt,
                      Observer&& observer = Observer{}) {
  cfg.validate();
  const Index K = S.rows();
  if (S.cols() != K || K < 1) throw InvalidArgument("ADMM: S must be square and non-empty");
  if (!S.allFinite()) throw NumericError("ADMM: S is not finite");
  if (!is_symmetric(S, 1e-10 * std::max(1.0, S.cwiseAbs().maxCoeff())))
    throw InvalidArgument("ADMM: S is not symmetric");

  const double rho = cfg.rho;
  const double c = cfg.logdet_coeff;
  AdmmState st;
  if (warm && warm->Z.rows() == K && warm->U.rows() == K) {
    st.Z = warm->Z;
    st.U = warm->U;
    st.theta = warm->theta.rows() == K ? warm->theta : Matrix::Identity(K, K);
  } else {
    st.Z = Matrix::Zero(K, K);
    st.U = Matrix::Zero(K, K);
    st.theta = Matrix::Identity(K, K);
  }

  AdmmResult best;
  double best_obj = std::numeric_limits<double>::infinity();
  const double sqrt_p = static_cast<double>(K);  // sqrt(K * K)
  bool converged = false;
  ThetaUpdateInfo info;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    info.iteration = it;
    st.theta = theta_update(S, st.Z, st.U, rho, c, &info.rhs_eigenvalues, &info.theta_eigenvalues);
    observer(static_cast<const ThetaUpdateInfo&>(info));
    Matrix z_prev = std::move(st.Z);
    st.Z = z_update(st.theta, st.U, cfg.lambda, rho);
    st.U += st.theta - st.Z;
    st.iterations = it;
    st.primal_residual = (st.theta - st.Z).norm();
    st.dual_residual = rho * (st.Z - z_prev).norm();

    const double eps_pri = sqrt_p * cfg.eps_abs + cfg.eps_rel * std::max(st.theta.norm(), st.Z.norm());
    const double eps_dual = sqrt_p * cfg.eps_abs + cfg.eps_rel * rho * st.U.norm();
    if (st.primal_residual <= eps_pri && st.dual_residual <= eps_dual) {
      converged = true;
      break;
    }
    const double logdet = info.theta_eigenvalues.array().log().sum();
    const double obj = (S.array() * st.theta.array()).sum() - c * logdet + cfg.lambda * st.theta.cwiseAbs().sum();
    if (obj < best_obj) {
      best_obj = obj;
      best.state = st;
    }
  }

  AdmmResult out;
  out.converged = converged;
  out.state = converged ? std::move(st) : std::move(best.state);
  out.omega = out.state.theta;
  out.support = support_of(out.state.Z);
  return out;
}

}  // namespace mssl
