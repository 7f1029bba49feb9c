#include "helpers.hpp"

namespace mssl {
namespace {

bool same_dataset(const MultiTaskDataset& a, const MultiTaskDataset& b) {
  if (a.num_tasks() != b.num_tasks() || a.d != b.d) return false;
  for (Index k = 0; k < a.num_tasks(); ++k)
    if (a.tasks[k].id != b.tasks[k].id || a.tasks[k].X != b.tasks[k].X || a.tasks[k].y != b.tasks[k].y) return false;
  return true;
}

double correlation(const Vector& a, const Vector& b) {
  const Vector ca = a.array() - a.mean(), cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

TEST(ClusterTasks, DefaultShape) {
  SyntheticSpec spec;
  spec.seed = 1;
  const auto data = generate_cluster_tasks(spec);
  EXPECT_EQ(data.train.num_tasks(), 13);
  EXPECT_EQ(data.train.d, 30);
  for (Index k = 0; k < 13; ++k) {
    EXPECT_EQ(data.train.tasks[k].rows(), 60);
    EXPECT_EQ(data.test.tasks[k].rows(), 40);
    EXPECT_EQ(data.train.tasks[k].X, data.train.tasks[0].X);  // one shared design
    EXPECT_EQ(data.train.tasks[k].id, "task" + std::to_string(k + 1));
  }
  EXPECT_EQ(data.truth.edges.size(), 6u + 15u);
  for (const auto& [a, b] : data.truth.edges) {
    EXPECT_LT(a, b);
    EXPECT_LT(b, 10);
    EXPECT_TRUE((a < 4 && b < 4) || (a >= 4 && b >= 4));
  }
  EXPECT_EQ(data.truth.W.rows(), 30);
  EXPECT_EQ(data.truth.W.cols(), 13);
}

TEST(ClusterTasks, Deterministic) {
  SyntheticSpec spec;
  spec.seed = 42;
  const auto a = generate_cluster_tasks(spec), b = generate_cluster_tasks(spec);
  EXPECT_TRUE(same_dataset(a.train, b.train));
  EXPECT_TRUE(same_dataset(a.test, b.test));
  EXPECT_EQ(a.truth.W, b.truth.W);
  spec.seed = 43;
  EXPECT_FALSE(same_dataset(a.train, generate_cluster_tasks(spec).train));
}

TEST(ClusterTasks, NoiselessOlsIsExact) {
  SyntheticSpec spec;
  spec.noise_std = 0.0;
  spec.seed = 2;
  const auto data = generate_cluster_tasks(spec);
  const auto m = make_baseline_model(data.train, fit_independent(data.train, 0.0).W, Variant::independent);
  for (double r : evaluate(m, data.test).per_task) EXPECT_LT(r, 1e-8);
}

TEST(ClusterTasks, WithinClusterParametersCorrelate) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const auto data = generate_cluster_tasks(spec);
    const Matrix& W = data.truth.W;
    double within = 1.0, across = -1.0;
    for (int a = 0; a < 13; ++a)
      for (int b = a + 1; b < 13; ++b) {
        const double r = correlation(W.col(a), W.col(b));
        const bool same = (a < 4 && b < 4) || (a >= 4 && a < 10 && b >= 4 && b < 10);
        if (same) within = std::min(within, r);
        else across = std::max(across, r);
      }
    EXPECT_GT(within, across) << "seed " << seed;
  }
}

TEST(ClusterTasks, LogisticLabelsAndValidation) {
  SyntheticSpec spec;
  spec.loss = LossKind::logistic;
  spec.K = 8;
  spec.d = 20;
  spec.clusters = {{0, 1, 2, 3}, {4, 5, 6, 7}};
  spec.seed = 5;
  const auto data = generate_cluster_tasks(spec);
  EXPECT_NO_THROW(data.train.validate());
  EXPECT_EQ(data.train.loss, LossKind::logistic);

  SyntheticSpec bad;
  bad.clusters = {{0, 1}, {1, 2}};
  EXPECT_THROW(generate_cluster_tasks(bad), InvalidArgument);
  bad = SyntheticSpec{};
  bad.n_train = 100;
  EXPECT_THROW(generate_cluster_tasks(bad), InvalidArgument);
}

TEST(SpatialTasks, ShapeAndTruth) {
  SpatialSpec spec;
  spec.seed = 3;
  const auto data = generate_spatial_tasks(spec);
  EXPECT_EQ(data.train.num_tasks(), 36);
  EXPECT_EQ(data.train.d, 10);
  EXPECT_TRUE(data.train.equal_sizes());
  EXPECT_EQ(data.train.tasks[0].rows(), 40);
  EXPECT_EQ(data.test.tasks[0].rows(), 40);
  EXPECT_EQ(data.truth.edges.size(), 60u);
  spec.kappa = 0.0;
  EXPECT_TRUE(generate_spatial_tasks(spec).truth.edges.empty());
  const auto again = generate_spatial_tasks(spec), once = generate_spatial_tasks(spec);
  EXPECT_TRUE(same_dataset(again.train, once.train));
  spec.tau = 0.0;
  EXPECT_THROW(generate_spatial_tasks(spec), InvalidArgument);
}

TEST(SpatialTasks, ResidualPrecisionMatchesSpec) {
  SpatialSpec spec;
  spec.rows = 2;
  spec.cols = 2;
  spec.d = 2;
  spec.kappa = 2.0;
  spec.tau = 1.0;
  spec.n_train = 40000;
  spec.n_test = 10;
  spec.seed = 4;
  const auto data = generate_spatial_tasks(spec);
  const Index K = 4, n = spec.n_train;
  Matrix E(n, K);
  for (Index k = 0; k < K; ++k) E.col(k) = data.train.tasks[k].y - data.train.tasks[k].X * data.truth.W.col(k);
  const Matrix cov = E.transpose() * E / static_cast<double>(n);
  const Matrix expected = spec.kappa * grid_laplacian(2, 2).L + spec.tau * Matrix::Identity(K, K);
  EXPECT_LE((cov.inverse() - expected).cwiseAbs().maxCoeff(), 0.1 * expected.cwiseAbs().maxCoeff());
}

TEST(EdgeMetrics, Examples) {
  auto m = edge_metrics({{0, 1}}, {{0, 1}, {0, 2}});
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);

  m = edge_metrics({{0, 1}, {2, 3}}, {{0, 1}, {2, 3}});
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);

  m = edge_metrics({}, {{0, 1}});
  EXPECT_DOUBLE_EQ(m.precision, 0.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.0);
  EXPECT_DOUBLE_EQ(m.f1, 0.0);

  m = edge_metrics({}, {});
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
}

TEST(EdgeMetrics, OrderAndSelfPairsIgnored) {
  const auto a = edge_metrics({{1, 0}, {2, 2}, {3, 1}}, {{0, 1}, {1, 3}, {1, 2}});
  const auto b = edge_metrics({{0, 1}, {1, 3}}, {{2, 1}, {3, 1}, {1, 0}});
  EXPECT_DOUBLE_EQ(a.precision, 1.0);
  EXPECT_DOUBLE_EQ(a.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(a.f1, b.f1);
}

TEST(Evaluate, RegressionMetrics) {
  auto ds = test::random_dataset(2, 3, 9, LossKind::squared, 6);
  std::mt19937_64 rng(6);
  const Matrix W = test::gaussian(3, 2, rng);
  const auto m = make_baseline_model(ds, W, Variant::independent);
  for (Index k = 0; k < 2; ++k) ds.tasks[k].y = ds.tasks[k].X * W.col(k);
  auto r = evaluate(m, ds);
  EXPECT_LE(r.mean, 1e-12);

  // A task whose features are zero predicts 0; with centered y that equals predicting the mean.
  MultiTaskDataset c{{{"a", Matrix::Zero(4, 1), Vector(4)}}, 1, LossKind::squared};
  c.tasks[0].y << 1, -1, 3, -3;
  const auto zero = make_baseline_model(c, Matrix::Ones(1, 1), Variant::independent);
  const double pop_std = std::sqrt((1.0 + 1.0 + 9.0 + 9.0) / 4.0);
  EXPECT_NEAR(evaluate(zero, c).per_task[0], pop_std, 1e-15);

  // independent recomputation on noisy targets
  const auto noisy = test::random_dataset(2, 3, 9, LossKind::squared, 7);
  r = evaluate(m, noisy);
  double total = 0.0;
  std::vector<double> per;
  for (Index k = 0; k < 2; ++k) {
    double ss = 0.0;
    for (Index i = 0; i < 9; ++i) {
      double p = 0.0;
      for (Index j = 0; j < 3; ++j) p += noisy.tasks[k].X(i, j) * W(j, k);
      ss += (p - noisy.tasks[k].y[i]) * (p - noisy.tasks[k].y[i]);
    }
    per.push_back(std::sqrt(ss / 9.0));
    total += per.back() / 2.0;
  }
  EXPECT_NEAR(r.per_task[0], per[0], 1e-12);
  EXPECT_NEAR(r.per_task[1], per[1], 1e-12);
  EXPECT_NEAR(r.mean, total, 1e-12);
  EXPECT_NEAR(r.stddev, std::abs(per[0] - per[1]) / 2.0, 1e-12);
  EXPECT_THROW(evaluate(m, test::random_dataset(3, 3, 9, LossKind::squared, 7)), InvalidArgument);
}

TEST(Evaluate, ClassificationErrorRate) {
  MultiTaskDataset ds{{{"a", Matrix(4, 1), Vector(4)}}, 1, LossKind::logistic};
  ds.tasks[0].X << -2, -1, 1, 2;
  ds.tasks[0].y << 0, 1, 1, 1;
  const auto m = make_baseline_model(ds, Matrix::Ones(1, 1), Variant::independent);
  const auto r = evaluate(m, ds);
  EXPECT_TRUE(r.classification);
  EXPECT_DOUBLE_EQ(r.per_task[0], 0.25);
}

}  // namespace
}  // namespace mssl
