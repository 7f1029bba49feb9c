#include <algorithm>

#include "helpers.hpp"

namespace mssl {
namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Root of the scalar stationarity s + lambda - c / w = 0 by bisection (w > 0).
double scalar_root(double s, double lambda, double c) {
  double lo = 1e-12, hi = 1e12;
  for (int it = 0; it < 400; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (s + lambda - c / mid > 0.0) hi = mid;
    else lo = mid;
  }
  return std::sqrt(lo * hi);
}

TEST(Scatter, Examples) {
  EXPECT_TRUE(scatter(Matrix::Identity(2, 2)).isApprox(Matrix::Identity(2, 2)));
  Matrix M(1, 2);
  M << 1, 2;
  Matrix expected(2, 2);
  expected << 1, 2, 2, 4;
  EXPECT_EQ(scatter(M), expected);

  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix S = scatter(test::gaussian(3 + rep % 5, 6, rng));
    EXPECT_TRUE(is_symmetric(S, 0.0));
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(ThetaUpdate, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(theta_eigen_root(0.0, 1.0, 1.0), 1.0);

  const Matrix S = Matrix::Ones(1, 1), Z = Matrix::Zero(1, 1), U = Matrix::Zero(1, 1);
  const double theta = theta_update(S, Z, U, 1.0, 1.0)(0, 0);
  EXPECT_NEAR(theta, (-1.0 + std::sqrt(5.0)) / 2.0, 1e-15);
  EXPECT_NEAR(theta, 0.618034, 1e-6);
  EXPECT_NEAR(1.0 * theta - 1.0 / theta, -1.0, 1e-14);

  // rho = 2, right-hand side eigenvalue 3, c = 1
  const double t2 = theta_update(Matrix::Zero(1, 1), Matrix::Constant(1, 1, 1.5), Matrix::Zero(1, 1), 2.0, 1.0)(0, 0);
  EXPECT_NEAR(t2, (3.0 + std::sqrt(17.0)) / 4.0, 1e-15);
  EXPECT_NEAR(t2, 1.780776, 1e-6);
  EXPECT_NEAR(2.0 * t2 - 1.0 / t2, 3.0, 1e-14);
}

TEST(ThetaUpdate, UnitCoefficientMatchesTextbookFormulaExactly) {
  // With c = 1 the root is (l + sqrt(l^2 + 4 rho)) / (2 rho), bit for bit.
  const double lam = -1.0, rho = 1.0;
  const double textbook = (lam + std::sqrt(lam * lam + 4.0 * rho)) / (2.0 * rho);
  EXPECT_EQ(theta_eigen_root(lam, rho, 1.0), textbook);
  EXPECT_EQ(theta_update(Matrix::Ones(1, 1), Matrix::Zero(1, 1), Matrix::Zero(1, 1), rho, 1.0)(0, 0), textbook);
  EXPECT_EQ(textbook, (-1.0 + std::sqrt(5.0)) / 2.0);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-50.0, 50.0), ur(0.01, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const double l = u(rng), r = ur(rng);
    EXPECT_EQ(theta_eigen_root(l, r, 1.0), (l + std::sqrt(l * l + 4.0 * r)) / (2.0 * r));
  }
}

TEST(ThetaUpdate, SatisfiesMatrixStationarity) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Index K = 2 + rep;
    const Matrix S = test::random_spd(K, rng);
    Matrix Z = test::gaussian(K, K, rng), U = test::gaussian(K, K, rng);
    Z = 0.5 * (Z + Z.transpose()).eval();
    U = 0.5 * (U + U.transpose()).eval();
    const double rho = 0.5 + rep, c = 0.5 * static_cast<double>(K);
    const Matrix T = theta_update(S, Z, U, rho, c);
    Eigen::SelfAdjointEigenSolver<Matrix> es(T);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    const Matrix lhs = rho * T - c * T.inverse();
    const Matrix rhs = rho * (Z - U) - S;
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
  }
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = 1.0;
  EXPECT_THROW(theta_update(bad, Matrix::Zero(2, 2), Matrix::Zero(2, 2), 1.0, 1.0), InvalidArgument);
}

TEST(ZUpdate, Examples) {
  EXPECT_NEAR(z_update(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.2), 0.2, 1.0)(0, 0), 1.0, 1e-15);

  std::mt19937_64 rng(4);
  Matrix T = test::gaussian(4, 4, rng), U = test::gaussian(4, 4, rng);
  T = (T + T.transpose()).eval();
  U = (U + U.transpose()).eval();
  EXPECT_EQ(z_update(T, U, 0.0, 1.0), T + U);

  const double big = (T + U).cwiseAbs().maxCoeff();
  const Matrix Z = z_update(T, U, 2.0 * big, 2.0);
  EXPECT_TRUE(support_of(Z).empty());
  EXPECT_TRUE(is_symmetric(z_update(T, U, 0.3, 1.0), 0.0));
}

// Default stopping tolerances bound residuals near 1e-5, so closed-form checks tighten them.
AdmmConfig tight() {
  AdmmConfig cfg;
  cfg.eps_abs = 1e-11;
  cfg.eps_rel = 1e-11;
  cfg.max_iters = 50000;
  return cfg;
}

TEST(Admm, ZeroPenaltyClosedForms) {
  AdmmConfig cfg = tight();
  cfg.logdet_coeff = 1.0;
  auto r = admm_solve(Matrix::Identity(3, 3), cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_LE((r.omega - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-6);

  Matrix S = Matrix::Zero(2, 2);
  S.diagonal() << 2, 4;
  r = admm_solve(S, cfg);
  EXPECT_NEAR(r.omega(0, 0), 0.5, 1e-6);
  EXPECT_NEAR(r.omega(1, 1), 0.25, 1e-6);
  EXPECT_NEAR(r.omega(0, 1), 0.0, 1e-6);
}

TEST(Admm, ZeroPenaltyMatchesScaledInverse) {
  std::mt19937_64 rng(5);
  for (Index K : {2, 5, 10, 15, 20}) {
    const Matrix S = test::random_spd(K, rng);
    AdmmConfig cfg = tight();
    cfg.logdet_coeff = 0.5 * static_cast<double>(K);
    const auto r = admm_solve(S, cfg);
    const Matrix expected = cfg.logdet_coeff * S.inverse();
    EXPECT_LE((r.omega - expected).norm() / expected.norm(), 1e-6) << "K=" << K;
  }
}

TEST(Admm, LargePenaltyGivesDiagonalScalarRoots) {
  Matrix S(2, 2);
  S << 2, 0.1, 0.1, 2;
  AdmmConfig cfg = tight();
  cfg.lambda = 10.0;
  cfg.logdet_coeff = 1.0;
  const auto r = admm_solve(S, cfg);
  EXPECT_TRUE(r.support.empty());
  for (Index i = 0; i < 2; ++i) EXPECT_NEAR(r.omega(i, i), scalar_root(S(i, i), 10.0, 1.0), 1e-6);
  EXPECT_NEAR(r.omega(0, 1), 0.0, 1e-6);
}

TEST(Admm, KktResidual) {
  std::mt19937_64 rng(6);
  for (double lambda : {0.01, 0.1, 1.0})
    for (int rep = 0; rep < 5; ++rep) {
      const Index K = 4 + 2 * rep;
      const Matrix S = scatter(test::gaussian(2 * K, K, rng)) / static_cast<double>(K);
      AdmmConfig cfg;
      cfg.lambda = lambda;
      cfg.logdet_coeff = 0.5 * static_cast<double>(K);
      const auto r = admm_solve(S, cfg);
      EXPECT_TRUE(r.converged);
      EXPECT_LE(kkt_residual(S, r.omega, r.state.Z, lambda, cfg.logdet_coeff), 1e-4)
          << "lambda=" << lambda << " K=" << K;
      EXPECT_LE(r.state.primal_residual, 1e-2);
      EXPECT_TRUE(is_symmetric(r.state.Z, 1e-12));
      for (const auto& [a, b] : r.support) EXPECT_LT(a, b);
    }
}

TEST(Admm, ObserverSeesScalarIdentityEveryIteration) {
  std::mt19937_64 rng(7);
  const Index K = 8;
  const Matrix S = scatter(test::gaussian(12, K, rng));
  AdmmConfig cfg;
  cfg.lambda = 0.5;
  cfg.rho = 1.7;
  cfg.logdet_coeff = 4.0;
  int calls = 0;
  double worst = 0.0, min_theta = std::numeric_limits<double>::infinity();
  const auto r = admm_solve(S, cfg, std::nullopt, [&](const ThetaUpdateInfo& info) {
    ++calls;
    EXPECT_EQ(info.iteration, calls);
    for (Index i = 0; i < K; ++i) {
      const double th = info.theta_eigenvalues[i];
      const double lam = info.rhs_eigenvalues[i];
      worst = std::max(worst, std::abs(cfg.rho * th - cfg.logdet_coeff / th - lam) / std::max(1.0, std::abs(lam)));
      min_theta = std::min(min_theta, th);
    }
  });
  EXPECT_EQ(calls, r.state.iterations);
  EXPECT_GT(calls, 1);
  EXPECT_LE(worst, 1e-10);
  EXPECT_GT(min_theta, 0.0);
}

TEST(Admm, WarmStartNeedsNoMoreIterations) {
  std::mt19937_64 rng(8);
  std::vector<double> warm_iters, cold_iters;
  for (int rep = 0; rep < 20; ++rep) {
    const Index K = 6;
    const Matrix M = test::gaussian(10, K, rng);
    const Matrix S_prev = scatter(M);
    const Matrix S = scatter(M + 0.05 * test::gaussian(10, K, rng));
    AdmmConfig cfg;
    cfg.lambda = 0.5;
    cfg.logdet_coeff = 3.0;
    const auto prev = admm_solve(S_prev, cfg);
    const auto warm = admm_solve(S, cfg, prev.state);
    const auto cold = admm_solve(S, cfg);
    warm_iters.push_back(warm.state.iterations);
    cold_iters.push_back(cold.state.iterations);
  }
  EXPECT_LE(median(warm_iters), median(cold_iters));
}

TEST(Admm, NonConvergenceReturnsBestIterate) {
  std::mt19937_64 rng(9);
  const Matrix S = scatter(test::gaussian(10, 5, rng));
  AdmmConfig cfg;
  cfg.lambda = 0.3;
  cfg.logdet_coeff = 2.5;
  cfg.max_iters = 3;
  const auto r = admm_solve(S, cfg);
  EXPECT_FALSE(r.converged);
  EXPECT_LE(r.state.iterations, 3);
  EXPECT_TRUE(std::isfinite(omega_objective(S, r.omega, cfg.lambda, cfg.logdet_coeff)));
  Eigen::SelfAdjointEigenSolver<Matrix> es(r.omega);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Admm, Errors) {
  Matrix S = Matrix::Identity(2, 2);
  S(0, 1) = 0.5;
  EXPECT_THROW(admm_solve(S, AdmmConfig{}), InvalidArgument);
  AdmmConfig bad;
  bad.rho = 0.0;
  EXPECT_THROW(admm_solve(Matrix::Identity(2, 2), bad), InvalidArgument);
  EXPECT_TRUE(std::isinf(omega_objective(Matrix::Identity(2, 2), -Matrix::Identity(2, 2), 0.1, 1.0)));
}

}  // namespace
}  // namespace mssl
