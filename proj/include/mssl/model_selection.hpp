#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <random>

#include "mssl/baselines.hpp"
#include "mssl/estimator.hpp"
#include "mssl/parallel.hpp"
#include "mssl/synthetic.hpp"

namespace mssl {

/// Fits any variant that needs only (lambda, gamma). Fixed-structure fits need a Laplacian and are not covered.
inline TrainedModel fit_variant(Variant v, const MultiTaskDataset& ds, double lambda, double gamma,
                                const MsslConfig& cfg = {}) {
  switch (v) {
    case Variant::p_mssl:
    case Variant::r_mssl:
      return fit_mssl(v, ds, lambda, gamma, cfg);
    case Variant::independent:
      return make_baseline_model(ds, fit_independent(ds, gamma, cfg.wstep).W, Variant::independent, gamma);
    case Variant::fixed_structure:
      break;
  }
  throw InvalidArgument("fit_variant: fixed-structure fits need an explicit Laplacian");
}

namespace detail {

inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

/// Row subsample of size floor(fraction * n_k) without replacement. Tasks of equal size share one index set
/// so residual rows stay aligned.
inline MultiTaskDataset subsample(const MultiTaskDataset& ds, double fraction, std::mt19937_64& rng) {
  MultiTaskDataset out{{}, ds.d, ds.loss};
  const bool shared = ds.equal_sizes();
  std::vector<Index> shared_idx;
  for (const auto& t : ds.tasks) {
    if (!shared || shared_idx.empty()) {
      std::vector<Index> perm(static_cast<std::size_t>(t.rows()));
      std::iota(perm.begin(), perm.end(), Index{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      const auto m = std::max<Index>(1, static_cast<Index>(fraction * static_cast<double>(t.rows())));
      perm.resize(static_cast<std::size_t>(m));
      std::sort(perm.begin(), perm.end());
      if (shared) shared_idx = perm;
      out.tasks.push_back(select_rows(t, perm));
    } else {
      out.tasks.push_back(select_rows(t, shared_idx));
    }
  }
  return out;
}

}  // namespace detail

struct StabilityConfig {
  std::vector<double> lambda_grid;  // ascending; empty = derive from the data (see stability_lambda_grid)
  int n_subsamples = 100;
  double subsample_fraction = 0.5;
  double threshold = 0.8;           // pi_thr
  double max_false_edges = 1.0;     // E[V] budget used to choose lambda
  int grid_size = 6;                // only for the derived grid
  double grid_ratio = 0.5;          // smallest / largest derived lambda
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void validate() const {
    require(n_subsamples >= 1, "stability: n_subsamples must be >= 1");
    require(subsample_fraction > 0.0 && subsample_fraction < 1.0, "stability: subsample fraction must be in (0,1)");
    require(threshold > 0.5 && threshold <= 1.0, "stability: threshold must be in (0.5, 1]");
    require(max_false_edges > 0.0, "stability: max_false_edges must be > 0");
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
      require(lambda_grid[i] > 0.0, "stability: lambda grid values must be positive");
      require(i == 0 || lambda_grid[i] > lambda_grid[i - 1], "stability: lambda grid must be strictly ascending");
    }
  }
};

struct StabilityResult {
  std::vector<double> lambda_grid;
  EdgeSet pairs;          // every candidate pair, in row order of `frequency`
  Matrix frequency;       // pairs x grid, selection frequency in [0, 1]
  Vector max_frequency;   // per pair, max over the grid
  EdgeSet stable;
  Vector expected_selected;  // q at each lambda: mean |union of supports over grid values >= lambda|
  Vector error_bound;        // q^2 / ((2 pi_thr - 1) p) at each lambda
  double chosen_lambda = 0.0;
  Index chosen_index = 0;
  bool bound_satisfied = false;
  int total_fits = 0;
  int failed_fits = 0;
};

/// Geometric grid from lambda_max (the smallest lambda that leaves Omega diagonal for the scatter of a
/// first W-step with Omega = I on a subsample-sized fit) down to ratio * lambda_max.
inline std::vector<double> stability_lambda_grid(const MultiTaskDataset& ds, Variant variant, double gamma,
                                                 const MsslConfig& cfg, const StabilityConfig& scfg) {
  auto rng = detail::derived_rng(scfg.seed, ~std::uint64_t{0});
  const MultiTaskDataset sub = detail::subsample(ds, scfg.subsample_fraction, rng);
  MsslConfig one = cfg;
  one.max_outer = 1;
  one.admm.max_iters = 1;
  const auto m = fit_mssl(variant, sub, 0.0, gamma, one);
  const Index coupled = m.intercept ? m.W.rows() - 1 : m.W.rows();
  const auto fit_ds = m.intercept ? with_intercept(sub) : sub;
  const Matrix S = variant == Variant::r_mssl ? scatter(residual_matrix(m.W, fit_ds)) : scatter(m.W.topRows(coupled));
  double lmax = 0.0;
  for (Index i = 0; i < S.rows(); ++i)
    for (Index j = i + 1; j < S.cols(); ++j) lmax = std::max(lmax, std::abs(S(i, j)));
  if (!(lmax > 0.0)) lmax = 1.0;
  std::vector<double> grid(static_cast<std::size_t>(std::max(scfg.grid_size, 1)));
  const double n = static_cast<double>(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = lmax * std::pow(scfg.grid_ratio, (n - 1.0 - static_cast<double>(i)) / std::max(n - 1.0, 1.0));
  return grid;
}

/// Subsampling selection frequencies of Omega's off-diagonal support along a lambda grid.
/// An edge is stable when its maximum frequency over the grid reaches the threshold.
inline StabilityResult stability_selection(const MultiTaskDataset& ds, const StabilityConfig& scfg, Variant variant,
                                           double gamma, const MsslConfig& cfg = {}) {
  scfg.validate();
  if (variant != Variant::p_mssl && variant != Variant::r_mssl)
    throw InvalidArgument("stability selection needs an MSSL variant");
  ds.validate();
  StabilityResult res;
  res.lambda_grid = scfg.lambda_grid.empty() ? stability_lambda_grid(ds, variant, gamma, cfg, scfg) : scfg.lambda_grid;
  const Index K = ds.num_tasks();
  const auto G = static_cast<Index>(res.lambda_grid.size());
  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b) res.pairs.emplace_back(a, b);
  const auto P = static_cast<Index>(res.pairs.size());
  auto pair_index = [K](const Edge& e) {
    const Index a = e.first, b = e.second;
    return a * K - a * (a + 1) / 2 + (b - a - 1);
  };

  const auto B = static_cast<std::size_t>(scfg.n_subsamples);
  // selected[s] is P x G (1 if the pair is in the support), failed[s][g] marks failed fits.
  std::vector<Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>> selected(B);
  std::vector<std::vector<char>> failed(B, std::vector<char>(static_cast<std::size_t>(G), 0));
  parallel_for(
      B,
      [&](std::size_t s) {
        auto rng = detail::derived_rng(scfg.seed, s);
        const MultiTaskDataset sub = detail::subsample(ds, scfg.subsample_fraction, rng);
        selected[s] = Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic>::Zero(P, G);
        // Largest lambda first, each fit warm-started from the previous one.
        std::optional<WarmStart> warm;
        for (Index g = G - 1; g >= 0; --g) {
          try {
            auto fr = fit_mssl_from(variant, sub, res.lambda_grid[static_cast<std::size_t>(g)], gamma, cfg,
                                    warm ? &*warm : nullptr);
            for (const auto& e : fr.model.precision.support) selected[s](pair_index(e), g) = 1;
            warm = std::move(fr.state);
          } catch (const NumericError&) {
            failed[s][static_cast<std::size_t>(g)] = 1;
            warm.reset();
          }
        }
      },
      scfg.threads);

  res.total_fits = static_cast<int>(B) * static_cast<int>(G);
  Matrix counts = Matrix::Zero(P, G);
  Vector ok = Vector::Zero(G);
  for (std::size_t s = 0; s < B; ++s)
    for (Index g = 0; g < G; ++g) {
      if (failed[s][static_cast<std::size_t>(g)]) {
        ++res.failed_fits;
        continue;
      }
      ok[g] += 1.0;
      counts.col(g) += selected[s].col(g).cast<double>();
    }
  if (res.failed_fits > res.total_fits / 5)
    throw NumericError("stability selection: " + std::to_string(res.failed_fits) + " of " +
                       std::to_string(res.total_fits) + " fits failed (more than 20%)");
  res.frequency = Matrix::Zero(P, G);
  for (Index g = 0; g < G; ++g)
    if (ok[g] > 0.0) res.frequency.col(g) = counts.col(g) / ok[g];
  res.max_frequency = G > 0 ? Vector(res.frequency.rowwise().maxCoeff()) : Vector::Zero(P);
  for (Index p = 0; p < P; ++p)
    if (res.max_frequency[p] >= scfg.threshold) res.stable.push_back(res.pairs[static_cast<std::size_t>(p)]);

  // q(lambda_g): expected size of the union of supports over grid values >= lambda_g.
  res.expected_selected = Vector::Zero(G);
  for (std::size_t s = 0; s < B; ++s) {
    Eigen::Matrix<char, Eigen::Dynamic, 1> in_union = Eigen::Matrix<char, Eigen::Dynamic, 1>::Zero(P);
    for (Index g = G - 1; g >= 0; --g) {
      if (!failed[s][static_cast<std::size_t>(g)])
        for (Index p = 0; p < P; ++p) in_union[p] = static_cast<char>(in_union[p] | selected[s](p, g));
      res.expected_selected[g] += static_cast<double>(in_union.cast<int>().sum()) / static_cast<double>(B);
    }
  }
  const double denom = (2.0 * scfg.threshold - 1.0) * static_cast<double>(std::max<Index>(P, 1));
  res.error_bound = res.expected_selected.array().square() / denom;
  res.chosen_index = G - 1;
  for (Index g = 0; g < G; ++g)
    if (res.error_bound[g] <= scfg.max_false_edges) {
      res.chosen_index = g;
      res.bound_satisfied = true;
      break;
    }
  res.chosen_lambda = G > 0 ? res.lambda_grid[static_cast<std::size_t>(res.chosen_index)] : 0.0;
  return res;
}

/// Stable set at a different threshold from the same frequencies.
inline EdgeSet stable_edges(const StabilityResult& r, double threshold) {
  EdgeSet out;
  for (Index p = 0; p < r.max_frequency.size(); ++p)
    if (r.max_frequency[p] >= threshold) out.push_back(r.pairs[static_cast<std::size_t>(p)]);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvRow {
  double lambda = 0.0;
  double gamma = 0.0;
  std::vector<double> fold_scores;  // mean over tasks of held-out RMSE / error rate
  double score = 0.0;               // mean over folds
};

struct CvResult {
  double best_lambda = 0.0;
  double best_gamma = 0.0;
  double best_score = 0.0;
  std::vector<CvRow> table;
};

/// Row indices of each fold for every task. Tasks of equal size share one assignment.
inline std::vector<std::vector<std::vector<Index>>> cv_folds(const MultiTaskDataset& ds, int folds, std::uint64_t seed) {
  require(folds >= 2, "cv: folds must be >= 2");
  std::vector<std::vector<std::vector<Index>>> out;  // task -> fold -> rows
  const bool shared = ds.equal_sizes();
  for (Index k = 0; k < ds.num_tasks(); ++k) {
    const auto& t = ds.tasks[k];
    if (t.rows() < 2 * folds)
      throw InvalidArgument("cv: task '" + t.id + "' has " + std::to_string(t.rows()) + " rows; each of " +
                            std::to_string(folds) + " folds needs at least 2");
    if (shared && k > 0) {
      out.push_back(out.front());
      continue;
    }
    auto rng = detail::derived_rng(seed, static_cast<std::uint64_t>(k));
    std::vector<Index> perm(static_cast<std::size_t>(t.rows()));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<Index>> f(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < perm.size(); ++i) f[i % static_cast<std::size_t>(folds)].push_back(perm[i]);
    for (auto& rows : f) std::sort(rows.begin(), rows.end());
    out.push_back(std::move(f));
  }
  return out;
}

/// Training / validation split of fold `f`.
inline std::pair<MultiTaskDataset, MultiTaskDataset> cv_split(const MultiTaskDataset& ds,
                                                              const std::vector<std::vector<std::vector<Index>>>& folds,
                                                              int f) {
  MultiTaskDataset train{{}, ds.d, ds.loss}, valid{{}, ds.d, ds.loss};
  for (Index k = 0; k < ds.num_tasks(); ++k) {
    const auto& task_folds = folds[static_cast<std::size_t>(k)];
    std::vector<Index> tr;
    for (int g = 0; g < static_cast<int>(task_folds.size()); ++g)
      if (g != f) tr.insert(tr.end(), task_folds[static_cast<std::size_t>(g)].begin(), task_folds[static_cast<std::size_t>(g)].end());
    std::sort(tr.begin(), tr.end());
    train.tasks.push_back(select_rows(ds.tasks[k], tr));
    valid.tasks.push_back(select_rows(ds.tasks[k], task_folds[static_cast<std::size_t>(f)]));
  }
  return {std::move(train), std::move(valid)};
}

/// Grid search over (lambda, gamma). Lower scores win; ties go to the larger lambda, then the larger gamma.
inline CvResult cv_grid(const MultiTaskDataset& ds, const std::vector<double>& lambda_grid,
                        const std::vector<double>& gamma_grid, int folds, Variant variant, std::uint64_t seed,
                        const MsslConfig& cfg = {}, unsigned threads = 0) {
  require(!lambda_grid.empty() && !gamma_grid.empty(), "cv: grids must be non-empty");
  ds.validate();
  const auto split = cv_folds(ds, folds, seed);
  CvResult res;
  for (double l : lambda_grid)
    for (double g : gamma_grid) res.table.push_back({l, g, std::vector<double>(static_cast<std::size_t>(folds)), 0.0});

  const std::size_t jobs = res.table.size() * static_cast<std::size_t>(folds);
  parallel_for(
      jobs,
      [&](std::size_t job) {
        auto& row = res.table[job / static_cast<std::size_t>(folds)];
        const int f = static_cast<int>(job % static_cast<std::size_t>(folds));
        const auto [train, valid] = cv_split(ds, split, f);
        const auto m = fit_variant(variant, train, row.lambda, row.gamma, cfg);
        row.fold_scores[static_cast<std::size_t>(f)] = evaluate(m, valid).mean;
      },
      threads);

  double best = std::numeric_limits<double>::infinity();
  for (auto& row : res.table) {
    row.score = std::accumulate(row.fold_scores.begin(), row.fold_scores.end(), 0.0) / folds;
    const bool better = row.score < best ||
                        (row.score == best && (row.lambda > res.best_lambda ||
                                               (row.lambda == res.best_lambda && row.gamma > res.best_gamma)));
    if (better) {
      best = row.score;
      res.best_lambda = row.lambda;
      res.best_gamma = row.gamma;
    }
  }
  res.best_score = best;
  return res;
}

}  // namespace mssl
