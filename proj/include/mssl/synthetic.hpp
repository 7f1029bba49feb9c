#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>

#include "mssl/baselines.hpp"
#include "mssl/common.hpp"
#include "mssl/data.hpp"
#include "mssl/model.hpp"

namespace mssl {

/// Clustered-task benchmark. Tasks not listed in any cluster are independent singletons.
struct SyntheticSpec {
  Index K = 13;
  Index d = 30;
  Index n_total = 100;
  Index n_train = 60;
  std::vector<std::vector<int>> clusters = {{0, 1, 2, 3}, {4, 5, 6, 7, 8, 9}};
  double center_scale = 1.0;      // std of cluster centres and singleton parameters
  double similarity_scale = 0.1;  // std of the per-task perturbation around the centre
  double noise_std = 1.0;         // regression only
  bool shared_design = true;      // one X for all tasks
  LossKind loss = LossKind::squared;
  std::uint64_t seed = 0;

  void validate() const {
    require(K >= 1 && d >= 1, "synthetic: K and d must be >= 1");
    require(n_train >= 1 && n_train < n_total, "synthetic: need 1 <= n_train < n_total");
    require(noise_std >= 0.0 && similarity_scale >= 0.0 && center_scale >= 0.0, "synthetic: scales must be >= 0");
    std::set<int> seen;
    for (const auto& g : clusters)
      for (int k : g) {
        require(k >= 0 && k < K, "synthetic: cluster member out of range");
        require(seen.insert(k).second, "synthetic: clusters must be disjoint");
      }
  }
};

struct GroundTruth {
  Matrix W;
  EdgeSet edges;
  std::string notes;
};

struct SyntheticData {
  MultiTaskDataset train;
  MultiTaskDataset test;
  GroundTruth truth;
};

namespace detail {

inline Matrix standard_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

inline std::string task_name(Index k) { return "task" + std::to_string(k + 1); }

/// Shuffles row indices and splits them into train / test datasets.
inline void split_rows(const std::vector<Matrix>& Xs, const Matrix& Y, Index n_train, LossKind loss,
                       std::mt19937_64& rng, SyntheticData& out) {
  const Index n = Y.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> tr(perm.begin(), perm.begin() + n_train), te(perm.begin() + n_train, perm.end());
  out.train = MultiTaskDataset{{}, Xs.front().cols(), loss};
  out.test = out.train;
  for (Index k = 0; k < Y.cols(); ++k) {
    TaskData full{task_name(k), Xs.size() == 1 ? Xs.front() : Xs[static_cast<std::size_t>(k)], Y.col(k)};
    out.train.tasks.push_back(select_rows(full, tr));
    out.test.tasks.push_back(select_rows(full, te));
  }
}

}  // namespace detail

/// Shared (or per-task) Gaussian design, cluster-centre-plus-perturbation parameters,
/// y_k = X w_k + noise (or Bernoulli(sigmoid(X w_k)) for logistic), seeded train/test split.
inline SyntheticData generate_cluster_tasks(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> nd(0.0, 1.0);

  SyntheticData out;
  Matrix W(spec.d, spec.K);
  std::vector<int> cluster_of(static_cast<std::size_t>(spec.K), -1);
  for (std::size_t g = 0; g < spec.clusters.size(); ++g) {
    const Vector centre = spec.center_scale * detail::standard_normal(spec.d, 1, rng);
    for (int k : spec.clusters[g]) {
      cluster_of[static_cast<std::size_t>(k)] = static_cast<int>(g);
      W.col(k) = centre + spec.similarity_scale * detail::standard_normal(spec.d, 1, rng);
    }
  }
  for (Index k = 0; k < spec.K; ++k)
    if (cluster_of[static_cast<std::size_t>(k)] < 0) W.col(k) = spec.center_scale * detail::standard_normal(spec.d, 1, rng);
  for (Index a = 0; a < spec.K; ++a)
    for (Index b = a + 1; b < spec.K; ++b)
      if (cluster_of[static_cast<std::size_t>(a)] >= 0 && cluster_of[static_cast<std::size_t>(a)] == cluster_of[static_cast<std::size_t>(b)])
        out.truth.edges.emplace_back(static_cast<int>(a), static_cast<int>(b));

  std::vector<Matrix> Xs;
  const Index nx = spec.shared_design ? 1 : spec.K;
  for (Index k = 0; k < nx; ++k) Xs.push_back(detail::standard_normal(spec.n_total, spec.d, rng));

  Matrix Y(spec.n_total, spec.K);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index k = 0; k < spec.K; ++k) {
    const Matrix& X = Xs[spec.shared_design ? 0 : static_cast<std::size_t>(k)];
    const Vector eta = X * W.col(k);
    for (Index i = 0; i < spec.n_total; ++i) {
      if (spec.loss == LossKind::squared) Y(i, k) = eta[i] + spec.noise_std * nd(rng);
      else Y(i, k) = unif(rng) < sigmoid(eta[i]) ? 1.0 : 0.0;
    }
  }
  detail::split_rows(Xs, Y, spec.n_train, spec.loss, rng, out);
  out.truth.W = std::move(W);
  out.truth.notes = "cluster centre ~ N(0, " + format_double(spec.center_scale) + "^2 I), perturbation ~ N(0, " +
                    format_double(spec.similarity_scale) + "^2 I), seed " + std::to_string(spec.seed);
  return out;
}

/// Grid of tasks whose residual rows are Gaussian with precision kappa * L_grid + tau * I.
struct SpatialSpec {
  Index rows = 6;
  Index cols = 6;
  Index d = 10;
  Index n_train = 40;
  Index n_test = 40;
  double kappa = 3.0;
  double tau = 0.1;
  double base_scale = 0.5;    // std of the weights shared by every location
  double smooth_scale = 0.5;  // amplitude of the linear spatial trend in the weights
  double local_scale = 0.1;   // std of independent per-location weight deviations
  std::uint64_t seed = 0;

  void validate() const {
    require(rows >= 1 && cols >= 1 && d >= 1, "spatial: dimensions must be positive");
    require(n_train >= 1 && n_test >= 1, "spatial: need train and test rows");
    require(kappa >= 0.0, "spatial: kappa must be >= 0");
    require(tau > 0.0, "spatial: tau must be > 0");
  }
};

inline SyntheticData generate_spatial_tasks(const SpatialSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Index K = spec.rows * spec.cols;
  const Index n = spec.n_train + spec.n_test;
  const auto grid = grid_laplacian(spec.rows, spec.cols);
  const Matrix P = spec.kappa * grid.L + spec.tau * Matrix::Identity(K, K);
  Eigen::LLT<Matrix> llt(P);
  if (llt.info() != Eigen::Success) throw NumericError("spatial: noise precision is not positive definite");

  const Vector base = spec.base_scale * detail::standard_normal(spec.d, 1, rng);
  const Vector trend_r = spec.smooth_scale * detail::standard_normal(spec.d, 1, rng);
  const Vector trend_c = spec.smooth_scale * detail::standard_normal(spec.d, 1, rng);
  Matrix W(spec.d, K);
  for (Index r = 0; r < spec.rows; ++r)
    for (Index c = 0; c < spec.cols; ++c) {
      const double u = spec.rows > 1 ? static_cast<double>(r) / static_cast<double>(spec.rows - 1) - 0.5 : 0.0;
      const double v = spec.cols > 1 ? static_cast<double>(c) / static_cast<double>(spec.cols - 1) - 0.5 : 0.0;
      W.col(r * spec.cols + c) =
          base + u * trend_r + v * trend_c + spec.local_scale * detail::standard_normal(spec.d, 1, rng);
    }

  std::vector<Matrix> Xs;
  for (Index k = 0; k < K; ++k) Xs.push_back(detail::standard_normal(n, spec.d, rng));
  // P = L L^T, so e = L^{-T} z has covariance P^{-1}.
  const Matrix Z = detail::standard_normal(K, n, rng);
  const Matrix E = llt.matrixU().solve(Z).transpose();  // n x K
  Matrix Y(n, K);
  for (Index k = 0; k < K; ++k) Y.col(k) = Xs[static_cast<std::size_t>(k)] * W.col(k) + E.col(k);

  SyntheticData out;
  detail::split_rows(Xs, Y, spec.n_train, LossKind::squared, rng, out);
  out.truth.W = std::move(W);
  if (spec.kappa > 0.0) out.truth.edges = grid.edges;
  out.truth.notes = "residual precision kappa*L_grid + tau*I with kappa=" + format_double(spec.kappa) +
                    ", tau=" + format_double(spec.tau) + ", seed " + std::to_string(spec.seed);
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct EdgeMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Set-overlap metrics over unordered pairs. An empty estimate has precision 1 only when the truth is empty too.
inline EdgeMetrics edge_metrics(const EdgeSet& estimated, const EdgeSet& truth) {
  const EdgeSet est = normalize_edges(estimated);
  const EdgeSet tru = normalize_edges(truth);
  EdgeSet both;
  std::set_intersection(est.begin(), est.end(), tru.begin(), tru.end(), std::back_inserter(both));
  const double tp = static_cast<double>(both.size());
  EdgeMetrics m;
  m.precision = est.empty() ? (tru.empty() ? 1.0 : 0.0) : tp / static_cast<double>(est.size());
  m.recall = tru.empty() ? 1.0 : tp / static_cast<double>(tru.size());
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

struct EvalReport {
  bool classification = false;  // per_task holds error rates instead of RMSE
  std::vector<double> per_task;
  double mean = 0.0;
  double stddev = 0.0;  // population std over tasks
};

inline double rmse(const Vector& pred, const Vector& y) {
  return std::sqrt((pred - y).squaredNorm() / static_cast<double>(y.size()));
}

inline EvalReport summarize(std::vector<double> per_task, bool classification) {
  EvalReport r;
  r.classification = classification;
  r.per_task = std::move(per_task);
  const double K = static_cast<double>(r.per_task.size());
  for (double v : r.per_task) r.mean += v / K;
  for (double v : r.per_task) r.stddev += (v - r.mean) * (v - r.mean) / K;
  r.stddev = std::sqrt(r.stddev);
  return r;
}

/// Test RMSE per task (regression) or 0/1 error at threshold 0.5 (classification).
inline EvalReport evaluate(const TrainedModel& model, const MultiTaskDataset& test) {
  if (test.num_tasks() != model.num_tasks()) throw InvalidArgument("evaluate: task count mismatch");
  if (test.d != model.covariates) throw InvalidArgument("evaluate: covariate count mismatch");
  std::vector<double> per_task;
  const bool cls = model.loss == LossKind::logistic;
  for (Index k = 0; k < test.num_tasks(); ++k) {
    const auto& t = test.tasks[k];
    if (cls) {
      const Vector lab = predict_labels(model, k, t.X);
      per_task.push_back((lab.array() != t.y.array()).cast<double>().mean());
    } else {
      per_task.push_back(rmse(predict(model, k, t.X), t.y));
    }
  }
  return summarize(std::move(per_task), cls);
}

}  // namespace mssl
