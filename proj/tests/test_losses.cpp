#include "helpers.hpp"

namespace mssl {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

TEST(SquaredLoss, PlugIn) {
  const Matrix I = Matrix::Identity(2, 2);
  auto e = squared_value_grad(I, vec({1, 2}), vec({0, 0}));
  EXPECT_DOUBLE_EQ(e.value, 2.5);
  EXPECT_DOUBLE_EQ(e.grad[0], -1.0);
  EXPECT_DOUBLE_EQ(e.grad[1], -2.0);

  e = squared_value_grad(I, vec({1, 2}), vec({1, 2}));
  EXPECT_DOUBLE_EQ(e.value, 0.0);
  EXPECT_EQ(e.grad.cwiseAbs().maxCoeff(), 0.0);

  Matrix X(1, 2);
  X << 1, 1;
  e = squared_value_grad(X, vec({3}), vec({1, 1}));
  EXPECT_DOUBLE_EQ(e.value, 0.5);
  EXPECT_DOUBLE_EQ(e.grad[0], -1.0);
  EXPECT_DOUBLE_EQ(e.grad[1], -1.0);
}

TEST(SquaredLoss, ShapeMismatch) {
  EXPECT_THROW(squared_value_grad(Matrix::Identity(2, 2), vec({1}), vec({0, 0})), InvalidArgument);
  EXPECT_THROW(squared_value_grad(Matrix::Identity(2, 2), vec({1, 2}), vec({0})), InvalidArgument);
}

TEST(LogisticLoss, PlugIn) {
  const Matrix x = Matrix::Ones(1, 1);
  auto e = logistic_value_grad(x, vec({1}), vec({0}));
  EXPECT_NEAR(e.value, std::log(2.0), 1e-15);
  EXPECT_NEAR(e.grad[0], -0.5, 1e-15);

  e = logistic_value_grad(x, vec({0}), vec({0}));
  EXPECT_NEAR(e.value, std::log(2.0), 1e-15);
  EXPECT_NEAR(e.grad[0], 0.5, 1e-15);

  // log(1 + e^10) - 10 = log(1 + e^-10); sigma(10) - 1 = -1 / (1 + e^10)
  e = logistic_value_grad(x, vec({1}), vec({10}));
  EXPECT_NEAR(e.value, std::log1p(std::exp(-10.0)), 1e-18);
  EXPECT_NEAR(e.value, 4.5399e-5, 1e-9);
  EXPECT_NEAR(e.grad[0], -1.0 / (1.0 + std::exp(10.0)), 1e-18);
  EXPECT_NEAR(e.grad[0], -4.5398e-5, 1e-9);
}

TEST(LogisticLoss, ExtremeMarginsStayFinite) {
  const Matrix x = Matrix::Ones(1, 1);
  for (double w : {-800.0, -40.0, 40.0, 800.0})
    for (double y : {0.0, 1.0}) {
      const auto e = logistic_value_grad(x, vec({y}), vec({w}));
      EXPECT_TRUE(std::isfinite(e.value));
      EXPECT_TRUE(e.grad.allFinite());
      EXPECT_GE(e.value, 0.0);
    }
  EXPECT_NEAR(logistic_value_grad(x, vec({0}), vec({800})).value, 800.0, 1e-9);
}

TEST(LogisticLoss, RejectsNonBinaryLabel) {
  EXPECT_THROW(logistic_value_grad(Matrix::Ones(1, 1), vec({0.5}), vec({0})), InvalidArgument);
}

TEST(LogisticLoss, MonotoneInMargin) {
  const Matrix x = Matrix::Ones(1, 1);
  double prev = std::numeric_limits<double>::infinity();
  for (double m = -20.0; m <= 20.0; m += 0.25) {
    const double v = logistic_value_grad(x, vec({1}), vec({m})).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
}

class LossProperties : public ::testing::TestWithParam<LossKind> {};

TEST_P(LossProperties, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ds = test::random_dataset(1, 1 + rep % 5, 2 + rep % 9, GetParam(), 100 + rep);
    const auto& t = ds.tasks[0];
    const Matrix w = test::gaussian(ds.d, 1, rng);
    auto f = [&](const Matrix& v) { return loss_value_grad(GetParam(), t.X, t.y, v.col(0)).value; };
    const Matrix num = test::numeric_gradient(f, w);
    const Vector g = loss_value_grad(GetParam(), t.X, t.y, w.col(0)).grad;
    EXPECT_LE(test::relative_error(g, num), 1e-5);
  }
}

TEST_P(LossProperties, ConvexAlongSegments) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto ds = test::random_dataset(1, 4, 8, GetParam(), 200 + rep);
    const auto& t = ds.tasks[0];
    const Vector a = 2.0 * test::gaussian(4, 1, rng), b = 2.0 * test::gaussian(4, 1, rng);
    const double s = u(rng);
    const double mid = loss_value_grad(GetParam(), t.X, t.y, s * a + (1 - s) * b).value;
    const double chord = s * loss_value_grad(GetParam(), t.X, t.y, a).value +
                         (1 - s) * loss_value_grad(GetParam(), t.X, t.y, b).value;
    EXPECT_LE(mid, chord + 1e-10);
  }
}

INSTANTIATE_TEST_SUITE_P(Both, LossProperties, ::testing::Values(LossKind::squared, LossKind::logistic),
                         [](const auto& info) { return to_string(info.param); });

TrainedModel two_covariate_model(LossKind loss, Matrix W) {
  TrainedModel m;
  m.loss = loss;
  m.task_ids = {"a"};
  m.covariates = W.rows();
  m.W = std::move(W);
  return m;
}

TEST(Predict, Regression) {
  Matrix W(2, 1);
  W << 1, 0;
  const auto m = two_covariate_model(LossKind::squared, W);
  Matrix X(1, 2);
  X << 2, 9;
  EXPECT_DOUBLE_EQ(predict(m, 0, X)[0], 2.0);
  EXPECT_THROW(predict(m, 1, X), InvalidArgument);
  EXPECT_THROW(predict(m, 0, Matrix::Ones(1, 3)), InvalidArgument);
}

TEST(Predict, ZeroWeightsGiveHalf) {
  const auto m = two_covariate_model(LossKind::logistic, Matrix::Zero(2, 1));
  std::mt19937_64 rng(1);
  const Matrix X = test::gaussian(5, 2, rng);
  EXPECT_TRUE((predict(m, 0, X).array() == 0.5).all());
  EXPECT_TRUE((predict_labels(m, 0, X).array() == 1.0).all());
}

TEST(Predict, StandardizedModelOnRawInputs) {
  const auto raw = test::random_dataset(3, 4, 12, LossKind::squared, 9);
  auto shifted = raw;
  for (auto& t : shifted.tasks) t.X = (3.0 * t.X).array() + 5.0;
  const auto [z, stats] = standardize(shifted);
  auto m = fit_p_mssl(z, 0.1, 0.1);
  const auto plain = m;  // same weights applied to already standardized inputs
  m.standardization = stats;
  for (Index k = 0; k < 3; ++k) {
    const Vector via_raw = predict(m, k, shifted.tasks[k].X);
    Vector via_std = predict(plain, k, z.tasks[k].X);
    via_std.array() += stats.tasks[static_cast<std::size_t>(k)].response_mean;
    EXPECT_LE((via_raw - via_std).cwiseAbs().maxCoeff(), 1e-10);
  }
}

}  // namespace
}  // namespace mssl
