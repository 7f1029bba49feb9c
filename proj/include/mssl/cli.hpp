#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "mssl/mssl.hpp"

namespace mssl::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, usage_error = 1, numeric_failure = 2, not_converged = 3 };

namespace detail {

using nlohmann::json;

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string join_ids(const std::vector<std::string>& ids, const Edge& e) {
  return ids[static_cast<std::size_t>(e.first)] + "," + ids[static_cast<std::size_t>(e.second)];
}

inline json edges_to_json(const EdgeSet& edges, const std::vector<std::string>& ids) {
  auto arr = json::array();
  for (const auto& [a, b] : edges)
    arr.push_back({{"a", ids[static_cast<std::size_t>(a)]}, {"b", ids[static_cast<std::size_t>(b)]}});
  return arr;
}

/// Reorders `ds` to the model's task order; every model task must be present.
inline MultiTaskDataset align_to_model(const MultiTaskDataset& ds, const TrainedModel& m) {
  std::map<std::string, const TaskData*> by_id;
  for (const auto& t : ds.tasks) by_id[t.id] = &t;
  MultiTaskDataset out{{}, ds.d, ds.loss};
  for (const auto& id : m.task_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("dataset has no task '" + id + "' required by the model");
    out.tasks.push_back(*it->second);
  }
  if (ds.d != m.covariates)
    throw DataError("dataset has " + std::to_string(ds.d) + " covariates but the model expects " +
                    std::to_string(m.covariates));
  return out;
}

/// Parses "ROWSxCOLS".
inline std::pair<Index, Index> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument("no x");
    std::size_t used = 0;
    const long r = std::stol(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("rows");
    const long c = std::stol(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument("cols");
    if (r < 1 || c < 1) throw std::invalid_argument("range");
    return {r, c};
  } catch (const std::exception&) {
    throw InvalidArgument("--grid expects ROWSxCOLS with positive integers, got '" + s + "'");
  }
}

/// Edge list file: JSON array of [id_a, id_b] pairs.
inline EdgeSet read_edge_file(const fs::path& path, const std::vector<std::string>& ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("edge file " + path.string() + " is not valid JSON: " + e.what());
  }
  std::map<std::string, int> index;
  for (std::size_t k = 0; k < ids.size(); ++k) index[ids[k]] = static_cast<int>(k);
  EdgeSet edges;
  if (!doc.is_array()) throw DataError("edge file must hold an array of [id, id] pairs");
  for (const auto& e : doc) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
      throw DataError("edge file entries must be [id, id] string pairs");
    const auto a = index.find(e[0].get<std::string>()), b = index.find(e[1].get<std::string>());
    if (a == index.end() || b == index.end())
      throw DataError("edge file names a task that is not in the dataset: " + e.dump());
    edges.emplace_back(a->second, b->second);
  }
  return edges;
}

/// Edges shown for a model: the learned support, or the nonzero pattern of a fixed coupling.
inline EdgeSet model_edges(const TrainedModel& m) {
  if (m.variant == Variant::p_mssl || m.variant == Variant::r_mssl) return normalize_edges(m.precision.support);
  EdgeSet edges;
  const Matrix& om = m.precision.omega;
  for (Index a = 0; a < om.rows(); ++a)
    for (Index b = a + 1; b < om.cols(); ++b)
      if (om(a, b) != 0.0) edges.emplace_back(static_cast<int>(a), static_cast<int>(b));
  return edges;
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

struct SolverOptions {
  double rho = 1.0;
  double logdet_coeff = 0.0;  // 0 = K/2
  int max_outer = 50;
  double outer_tol = 1e-5;
  int admm_max_iters = 1000;
  double eps_abs = 1e-6;
  double eps_rel = 1e-4;
  int wstep_max_iters = 5000;
  double wstep_tol = 1e-10;
  bool intercept = false;
  bool normalize_losses = false;

  void add_to(CLI::App* app) {
    app->add_option("--rho", rho, "ADMM penalty parameter")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--logdet-coeff", logdet_coeff, "log-det coefficient c (0 means K/2)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_option("--max-outer", max_outer, "outer alternating iterations")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--outer-tol", outer_tol, "relative objective decrease that stops the outer loop")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--admm-max-iters", admm_max_iters, "ADMM iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--eps-abs", eps_abs, "ADMM absolute tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--eps-rel", eps_rel, "ADMM relative tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--wstep-max-iters", wstep_max_iters, "W-step iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--wstep-tol", wstep_tol, "W-step relative objective tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_flag("--intercept", intercept, "fit an unpenalized per-task intercept (MSSL variants)");
    app->add_flag("--normalize-losses", normalize_losses, "divide each task loss by its row count");
  }

  MsslConfig config() const {
    MsslConfig cfg;
    cfg.admm.rho = rho;
    cfg.admm.max_iters = admm_max_iters;
    cfg.admm.eps_abs = eps_abs;
    cfg.admm.eps_rel = eps_rel;
    cfg.wstep.max_iters = wstep_max_iters;
    cfg.wstep.tol = wstep_tol;
    cfg.max_outer = max_outer;
    cfg.outer_tol = outer_tol;
    if (logdet_coeff > 0.0) cfg.logdet_coeff = logdet_coeff;
    cfg.fit_intercept = intercept;
    cfg.normalize_losses = normalize_losses;
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  std::string benchmark = "cluster";
  std::string loss = "squared";
  fs::path out;
  std::uint64_t seed = 0;
  Index K = 13, d = 30, n_total = 100, n_train = 60;
  double similarity = 0.1, noise = 1.0;
  bool per_task_design = false;
  Index rows = 6, cols = 6, spatial_d = 10, spatial_train = 40, spatial_test = 40;
  double kappa = 3.0, tau = 0.1;
};

inline int run_generate(const GenerateOptions& o, std::ostream& out) {
  SyntheticData data;
  if (o.benchmark == "cluster") {
    SyntheticSpec spec;
    spec.K = o.K;
    spec.d = o.d;
    spec.n_total = o.n_total;
    spec.n_train = o.n_train;
    spec.similarity_scale = o.similarity;
    spec.noise_std = o.noise;
    spec.shared_design = !o.per_task_design;
    spec.loss = loss_kind_from_string(o.loss);
    spec.seed = o.seed;
    if (o.K != 13) {
      // Scale the default layout to K: two clusters over the first 10/13 of the tasks.
      const Index c1 = std::max<Index>(1, (4 * o.K) / 13), c2 = std::max<Index>(c1, (10 * o.K) / 13);
      spec.clusters.clear();
      std::vector<int> a, b;
      for (Index k = 0; k < c1; ++k) a.push_back(static_cast<int>(k));
      for (Index k = c1; k < c2; ++k) b.push_back(static_cast<int>(k));
      if (a.size() > 1) spec.clusters.push_back(a);
      if (b.size() > 1) spec.clusters.push_back(b);
    }
    data = generate_cluster_tasks(spec);
  } else if (o.benchmark == "spatial") {
    if (o.loss != "squared") throw InvalidArgument("the spatial benchmark is regression only");
    SpatialSpec spec;
    spec.rows = o.rows;
    spec.cols = o.cols;
    spec.d = o.spatial_d;
    spec.n_train = o.spatial_train;
    spec.n_test = o.spatial_test;
    spec.kappa = o.kappa;
    spec.tau = o.tau;
    spec.seed = o.seed;
    data = generate_spatial_tasks(spec);
  } else {
    throw InvalidArgument("--benchmark must be cluster or spatial, got '" + o.benchmark + "'");
  }
  const auto train = write_manifest(data.train, o.out, "train");
  const auto test = write_manifest(data.test, o.out, "test");
  const auto ids = data.train.ids();
  json truth;
  truth["task_ids"] = ids;
  truth["W"] = mssl::detail::matrix_to_json(data.truth.W);
  truth["edges"] = edges_to_json(data.truth.edges, ids);
  truth["notes"] = data.truth.notes;
  write_json(o.out / "truth.json", truth);
  out << "wrote " << train.string() << ", " << test.string() << " and " << (o.out / "truth.json").string() << "\n";
  return ok;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  fs::path data;
  std::string variant = "p-mssl";
  double lambda = 0.1, gamma = 0.1;
  std::string grid;
  fs::path edges;
  double coupling_scale = 1.0;
  bool standardize = false;
  fs::path out = "model.json";
  fs::path trace;
  SolverOptions solver;
};

inline TrainedModel fit_from_options(const TrainOptions& o, const MultiTaskDataset& raw) {
  const Variant v = variant_from_string(o.variant);
  if (o.solver.intercept && (v == Variant::independent || v == Variant::fixed_structure))
    throw InvalidArgument("--intercept is only available for p-mssl and r-mssl; add a constant column instead");
  MultiTaskDataset ds = raw;
  std::optional<StandardizationStats> stats;
  if (o.standardize) {
    auto [z, s] = standardize(raw);
    ds = std::move(z);
    stats = std::move(s);
  }
  const MsslConfig cfg = o.solver.config();
  TrainedModel m;
  switch (v) {
    case Variant::p_mssl:
    case Variant::r_mssl:
      m = fit_mssl(v, ds, o.lambda, o.gamma, cfg);
      break;
    case Variant::independent:
      m = make_baseline_model(ds, fit_independent(ds, o.gamma, cfg.wstep).W, v, o.gamma);
      break;
    case Variant::fixed_structure: {
      if (o.grid.empty() == o.edges.empty())
        throw InvalidArgument("fixed-structure needs exactly one of --grid ROWSxCOLS or --edges FILE");
      LaplacianSpec L;
      if (!o.grid.empty()) {
        const auto [r, c] = parse_grid(o.grid);
        if (r * c != ds.num_tasks())
          throw InvalidArgument("--grid " + o.grid + " has " + std::to_string(r * c) + " nodes but the dataset has " +
                                std::to_string(ds.num_tasks()) + " tasks");
        L = grid_laplacian(r, c);
      } else {
        L = laplacian_from_edges(ds.num_tasks(), read_edge_file(o.edges, ds.ids()));
      }
      m = make_baseline_model(ds, fit_fixed_structure(ds, L, o.gamma, o.coupling_scale, cfg.wstep), v, o.gamma, L.L,
                              o.coupling_scale);
      break;
    }
  }
  if (m.objective_trace.empty()) m.objective_trace.push_back(total_objective(m, ds));
  m.standardization = std::move(stats);
  return m;
}

inline fs::path trace_path(const fs::path& model_path, const fs::path& trace) {
  if (!trace.empty()) return trace;
  fs::path p = model_path;
  return p.replace_filename(model_path.stem().string() + "_trace.csv");
}

inline int run_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const auto ds = load_manifest(o.data);
  const auto m = fit_from_options(o, ds);
  save_model(m, o.out);
  std::ostringstream csv;
  csv << "iteration,objective\n";
  for (std::size_t i = 0; i < m.objective_trace.size(); ++i) csv << i << "," << format_double(m.objective_trace[i]) << "\n";
  const auto tp = trace_path(o.out, o.trace);
  write_text(tp, csv.str());
  out << to_string(m.variant) << ": " << m.num_tasks() << " tasks, " << model_edges(m).size() << " edges";
  if (m.variant == Variant::p_mssl || m.variant == Variant::r_mssl) out << ", " << m.outer_iterations << " outer iterations";
  out << "\n";
  if (!m.objective_trace.empty())
    out << "final objective " << format_double(m.objective_trace.back()) << "\n";
  out << "wrote " << o.out.string() << " and " << tp.string() << "\n";
  if (!m.converged) {
    err << "warning: the fit did not converge; the model is written with \"converged\": false\n";
    return not_converged;
  }
  return ok;
}

// ---------------------------------------------------------------------------
// predict / evaluate

inline int run_predict(const fs::path& model_path, const fs::path& data, const fs::path& out_dir, std::ostream& out) {
  const auto m = load_model(model_path);
  const auto ds = load_manifest(data);
  std::map<std::string, Index> index;
  for (Index k = 0; k < m.num_tasks(); ++k) index[m.task_ids[static_cast<std::size_t>(k)]] = k;
  fs::create_directories(out_dir);
  for (const auto& t : ds.tasks) {
    const auto it = index.find(t.id);
    if (it == index.end()) throw DataError("the model has no task '" + t.id + "'");
    if (t.X.cols() != m.covariates)
      throw DataError("task '" + t.id + "' has " + std::to_string(t.X.cols()) + " covariates, the model expects " +
                      std::to_string(m.covariates));
    const Vector p = predict(m, it->second, t.X);
    std::ostringstream csv;
    if (m.loss == LossKind::logistic) {
      csv << "probability,label\n";
      for (Index i = 0; i < p.size(); ++i) csv << format_double(p[i]) << "," << (p[i] >= 0.5 ? 1 : 0) << "\n";
    } else {
      csv << "prediction\n";
      for (Index i = 0; i < p.size(); ++i) csv << format_double(p[i]) << "\n";
    }
    write_text(out_dir / (t.id + ".csv"), csv.str());
  }
  out << "wrote predictions for " << ds.num_tasks() << " tasks to " << out_dir.string() << "\n";
  return ok;
}

inline int run_evaluate(const fs::path& model_path, const fs::path& data, const fs::path& out_csv, std::ostream& out) {
  const auto m = load_model(model_path);
  const auto ds = align_to_model(load_manifest(data), m);
  const auto r = evaluate(m, ds);
  const std::string metric = r.classification ? "error_rate" : "rmse";
  std::ostringstream csv;
  csv << "task,rows," << metric << "\n";
  out << std::left << std::setw(16) << "task" << std::right << std::setw(8) << "rows" << std::setw(14) << metric << "\n";
  for (Index k = 0; k < ds.num_tasks(); ++k) {
    const auto& t = ds.tasks[k];
    const double v = r.per_task[static_cast<std::size_t>(k)];
    csv << t.id << "," << t.rows() << "," << format_double(v) << "\n";
    out << std::left << std::setw(16) << t.id << std::right << std::setw(8) << t.rows() << std::setw(14)
        << std::fixed << std::setprecision(6) << v << "\n";
  }
  csv << "mean,," << format_double(r.mean) << "\n" << "std,," << format_double(r.stddev) << "\n";
  out << std::left << std::setw(24) << "mean" << std::right << std::setw(14) << r.mean << "\n"
      << std::left << std::setw(24) << "std" << std::right << std::setw(14) << r.stddev << "\n";
  out.unsetf(std::ios::floatfield);
  if (!out_csv.empty()) write_text(out_csv, csv.str());
  return ok;
}

// ---------------------------------------------------------------------------
// select

struct SelectOptions {
  fs::path data;
  std::string method = "stability";
  std::string variant = "p-mssl";
  double gamma = 0.1;
  std::vector<double> lambdas, gammas;
  int subsamples = 100;
  double fraction = 0.5, threshold = 0.8, max_false_edges = 1.0;
  int grid_size = 6;
  double grid_ratio = 0.5;
  int folds = 5;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  fs::path out = "selection";
  SolverOptions solver;
};

inline int run_select(const SelectOptions& o, std::ostream& out) {
  const auto ds = load_manifest(o.data);
  const Variant v = variant_from_string(o.variant);
  const MsslConfig cfg = o.solver.config();
  const auto ids = ds.ids();
  fs::create_directories(o.out);
  if (o.method == "stability") {
    StabilityConfig sc;
    sc.lambda_grid = o.lambdas;
    std::sort(sc.lambda_grid.begin(), sc.lambda_grid.end());
    sc.n_subsamples = o.subsamples;
    sc.subsample_fraction = o.fraction;
    sc.threshold = o.threshold;
    sc.max_false_edges = o.max_false_edges;
    sc.grid_size = o.grid_size;
    sc.grid_ratio = o.grid_ratio;
    sc.seed = o.seed;
    sc.threads = o.threads;
    const auto r = stability_selection(ds, sc, v, o.gamma, cfg);
    std::ostringstream csv;
    csv << "a,b";
    for (double l : r.lambda_grid) csv << ",lambda=" << format_double(l);
    csv << ",max_frequency\n";
    for (std::size_t p = 0; p < r.pairs.size(); ++p) {
      csv << join_ids(ids, r.pairs[p]);
      for (Index g = 0; g < r.frequency.cols(); ++g) csv << "," << format_double(r.frequency(static_cast<Index>(p), g));
      csv << "," << format_double(r.max_frequency[static_cast<Index>(p)]) << "\n";
    }
    write_text(o.out / "frequencies.csv", csv.str());
    json rep;
    rep["method"] = "stability";
    rep["variant"] = to_string(v);
    rep["gamma"] = o.gamma;
    rep["lambda_grid"] = r.lambda_grid;
    rep["threshold"] = sc.threshold;
    rep["stable_edges"] = edges_to_json(r.stable, ids);
    rep["expected_selected"] = std::vector<double>(r.expected_selected.data(), r.expected_selected.data() + r.expected_selected.size());
    rep["error_bound"] = std::vector<double>(r.error_bound.data(), r.error_bound.data() + r.error_bound.size());
    rep["chosen_lambda"] = r.chosen_lambda;
    rep["bound_satisfied"] = r.bound_satisfied;
    rep["total_fits"] = r.total_fits;
    rep["failed_fits"] = r.failed_fits;
    write_json(o.out / "stability.json", rep);
    out << r.stable.size() << " stable edges at threshold " << sc.threshold << " over " << r.lambda_grid.size()
        << " lambda values (" << r.failed_fits << "/" << r.total_fits << " fits failed)\n";
    for (const auto& e : r.stable) out << "  " << join_ids(ids, e) << "\n";
    out << "chosen lambda " << format_double(r.chosen_lambda)
        << (r.bound_satisfied ? "" : " (no grid value meets the false-edge bound; smallest-bound value reported)") << "\n";
  } else if (o.method == "cv") {
    const std::vector<double> lg = o.lambdas.empty() ? std::vector<double>{0.01, 0.1, 1, 10, 100} : o.lambdas;
    const std::vector<double> gg = o.gammas.empty() ? std::vector<double>{0.01, 0.1, 1, 10, 100} : o.gammas;
    const auto r = cv_grid(ds, lg, gg, o.folds, v, o.seed, cfg, o.threads);
    std::ostringstream csv;
    csv << "lambda,gamma";
    for (int f = 0; f < o.folds; ++f) csv << ",fold" << f + 1;
    csv << ",score\n";
    for (const auto& row : r.table) {
      csv << format_double(row.lambda) << "," << format_double(row.gamma);
      for (double s : row.fold_scores) csv << "," << format_double(s);
      csv << "," << format_double(row.score) << "\n";
    }
    write_text(o.out / "cv_scores.csv", csv.str());
    write_json(o.out / "cv.json", {{"method", "cv"},
                                   {"variant", to_string(v)},
                                   {"folds", o.folds},
                                   {"best_lambda", r.best_lambda},
                                   {"best_gamma", r.best_gamma},
                                   {"best_score", r.best_score}});
    out << "best lambda " << format_double(r.best_lambda) << ", gamma " << format_double(r.best_gamma) << ", score "
        << format_double(r.best_score) << " over " << r.table.size() << " configurations\n";
  } else {
    throw InvalidArgument("--method must be stability or cv, got '" + o.method + "'");
  }
  out << "wrote reports to " << o.out.string() << "\n";
  return ok;
}

// ---------------------------------------------------------------------------
// export-structure

inline int run_export(const fs::path& model_path, const fs::path& json_path, const fs::path& dot_path,
                      std::ostream& out) {
  const auto m = load_model(model_path);
  const auto edges = model_edges(m);
  const Matrix& om = m.precision.omega;
  auto list = json::array();
  std::ostringstream dot;
  dot << "graph tasks {\n";
  for (const auto& id : m.task_ids) dot << "  \"" << dot_escape(id) << "\";\n";
  for (const auto& [a, b] : edges) {
    const auto& ia = m.task_ids[static_cast<std::size_t>(a)];
    const auto& ib = m.task_ids[static_cast<std::size_t>(b)];
    const double pc = partial_correlation(om, a, b);
    list.push_back({{"a", ia}, {"b", ib}, {"omega", om(a, b)}, {"partial_corr", pc}});
    dot << "  \"" << dot_escape(ia) << "\" -- \"" << dot_escape(ib) << "\" [weight=" << format_double(std::abs(pc))
        << "];\n";
  }
  dot << "}\n";
  write_json(json_path, list);
  write_text(dot_path, dot.str());
  out << edges.size() << " edges; wrote " << json_path.string() << " and " << dot_path.string() << "\n";
  return ok;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOptions {
  bool paper_synthetic = false;
  int runs = 30;
  std::uint64_t seed = 7;
  double lambda = 0.1, gamma = 0.1;
  unsigned threads = 0;
  fs::path out = "bench";
  SolverOptions solver;
};

inline int run_bench(const BenchOptions& o, std::ostream& out, std::ostream& err) {
  if (!o.paper_synthetic) throw InvalidArgument("bench needs a benchmark selector; use --paper-synthetic");
  const MsslConfig cfg = o.solver.config();
  SyntheticSpec base;
  const Index K = base.K;
  const auto R = static_cast<std::size_t>(o.runs);
  std::vector<EvalReport> mssl_r(R), ols_r(R);
  std::vector<char> converged(R, 0);
  parallel_for(
      R,
      [&](std::size_t r) {
        SyntheticSpec spec = base;
        spec.seed = o.seed + r;
        const auto data = generate_cluster_tasks(spec);
        const auto m = fit_p_mssl(data.train, o.lambda, o.gamma, cfg);
        const auto ols = make_baseline_model(data.train, fit_independent(data.train, 0.0).W, Variant::independent);
        mssl_r[r] = evaluate(m, data.test);
        ols_r[r] = evaluate(ols, data.test);
        converged[r] = m.converged;
      },
      o.threads);

  std::ostringstream csv;
  csv << "run,seed,task,method,rmse\n";
  for (std::size_t r = 0; r < R; ++r)
    for (Index k = 0; k < K; ++k)
      for (const auto& [name, rep] : {std::pair{"p-mssl", &mssl_r[r]}, std::pair{"ols", &ols_r[r]}})
        csv << r << "," << o.seed + r << "," << mssl::detail::task_name(k) << "," << name << ","
            << format_double(rep->per_task[static_cast<std::size_t>(k)]) << "\n";
  write_text(o.out / "rmse.csv", csv.str());

  std::ostringstream sum;
  sum << "task,method,mean,std\n";
  out << "test RMSE over " << o.runs << " runs (p-MSSL lambda=" << format_double(o.lambda)
      << ", gamma=" << format_double(o.gamma) << ")\n";
  out << std::left << std::setw(10) << "task" << std::right << std::setw(22) << "p-MSSL" << std::setw(22) << "OLS" << "\n";
  out << std::fixed << std::setprecision(4);
  for (Index k = 0; k < K; ++k) {
    std::vector<double> a, b;
    for (std::size_t r = 0; r < R; ++r) {
      a.push_back(mssl_r[r].per_task[static_cast<std::size_t>(k)]);
      b.push_back(ols_r[r].per_task[static_cast<std::size_t>(k)]);
    }
    const auto sa = summarize(a, false), sb = summarize(b, false);
    const std::string id = mssl::detail::task_name(k);
    sum << id << ",p-mssl," << format_double(sa.mean) << "," << format_double(sa.stddev) << "\n";
    sum << id << ",ols," << format_double(sb.mean) << "," << format_double(sb.stddev) << "\n";
    std::ostringstream ca, cb;
    ca << std::fixed << std::setprecision(4) << sa.mean << " +- " << sa.stddev;
    cb << std::fixed << std::setprecision(4) << sb.mean << " +- " << sb.stddev;
    out << std::left << std::setw(10) << id << std::right << std::setw(22) << ca.str() << std::setw(22) << cb.str()
        << "\n";
  }
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
  write_text(o.out / "summary.csv", sum.str());

  int wins = 0;
  for (std::size_t r = 0; r < R; ++r) {
    double a = 0.0, b = 0.0;
    for (Index k = 0; k < 10 && k < K; ++k) {
      a += mssl_r[r].per_task[static_cast<std::size_t>(k)];
      b += ols_r[r].per_task[static_cast<std::size_t>(k)];
    }
    wins += a < b;
  }
  out << "p-MSSL beats OLS on the mean over tasks 1-10 in " << wins << "/" << o.runs << " runs\n";
  out << "wrote " << (o.out / "rmse.csv").string() << " and " << (o.out / "summary.csv").string() << "\n";
  const auto failed = static_cast<int>(std::count(converged.begin(), converged.end(), 0));
  if (failed > 0) {
    err << "warning: " << failed << " p-MSSL fits did not converge\n";
    return not_converged;
  }
  return ok;
}

}  // namespace detail

/// Entry point of the command-line tool. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Multi-task sparse structure learning"};
  app.require_subcommand(1);

  detail::GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "write a synthetic benchmark (train/test manifests and ground truth)");
  g->add_option("--benchmark", gen.benchmark, "cluster or spatial")->capture_default_str();
  g->add_option("--loss", gen.loss, "squared or logistic (cluster benchmark)")->capture_default_str();
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  g->add_option("--tasks", gen.K, "cluster: number of tasks")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--covariates", gen.d, "cluster: number of covariates")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--n-total", gen.n_total, "cluster: rows per task")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--n-train", gen.n_train, "cluster: training rows per task")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--similarity", gen.similarity, "cluster: within-cluster perturbation std")->capture_default_str();
  g->add_option("--noise", gen.noise, "cluster: response noise std")->capture_default_str();
  g->add_flag("--per-task-design", gen.per_task_design, "cluster: draw a separate X for every task");
  g->add_option("--rows", gen.rows, "spatial: grid rows")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--cols", gen.cols, "spatial: grid columns")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--spatial-covariates", gen.spatial_d, "spatial: covariates per location")->capture_default_str();
  g->add_option("--spatial-train", gen.spatial_train, "spatial: training rows")->capture_default_str();
  g->add_option("--spatial-test", gen.spatial_test, "spatial: test rows")->capture_default_str();
  g->add_option("--kappa", gen.kappa, "spatial: grid coupling of the residual precision")->capture_default_str();
  g->add_option("--tau", gen.tau, "spatial: diagonal of the residual precision")->capture_default_str();

  detail::TrainOptions tr;
  auto* t = app.add_subcommand("train", "fit a model and write its JSON and objective trace");
  t->add_option("--data", tr.data, "dataset manifest")->required();
  t->add_option("--variant", tr.variant, "p-mssl, r-mssl, fixed-structure or independent")->capture_default_str();
  t->add_option("--lambda", tr.lambda, "sparsity penalty on Omega")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--gamma", tr.gamma, "sparsity penalty on W")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--grid", tr.grid, "fixed-structure: grid Laplacian ROWSxCOLS");
  t->add_option("--edges", tr.edges, "fixed-structure: JSON list of [id, id] edges");
  t->add_option("--coupling-scale", tr.coupling_scale, "fixed-structure: Laplacian multiplier")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  t->add_flag("--standardize", tr.standardize, "z-score covariates per task (and center regression responses)");
  t->add_option("--out", tr.out, "model JSON path")->capture_default_str();
  t->add_option("--trace", tr.trace, "objective trace CSV (default: <model>_trace.csv)");
  tr.solver.add_to(t);

  fs::path pred_model, pred_data, pred_out = "predictions";
  auto* p = app.add_subcommand("predict", "write per-task prediction CSVs");
  p->add_option("--model", pred_model, "model JSON")->required();
  p->add_option("--data", pred_data, "dataset manifest (the response column is ignored)")->required();
  p->add_option("--out", pred_out, "output directory")->capture_default_str();

  fs::path ev_model, ev_data, ev_out;
  auto* e = app.add_subcommand("evaluate", "per-task RMSE or error rate on a dataset");
  e->add_option("--model", ev_model, "model JSON")->required();
  e->add_option("--data", ev_data, "dataset manifest")->required();
  e->add_option("--out", ev_out, "metrics CSV");

  detail::SelectOptions sel;
  auto* s = app.add_subcommand("select", "stability selection or cross-validated penalty search");
  s->add_option("--data", sel.data, "dataset manifest")->required();
  s->add_option("--method", sel.method, "stability or cv")->capture_default_str();
  s->add_option("--variant", sel.variant, "p-mssl, r-mssl (or independent for cv)")->capture_default_str();
  s->add_option("--gamma", sel.gamma, "stability: W penalty")->check(CLI::NonNegativeNumber)->capture_default_str();
  s->add_option("--lambdas", sel.lambdas, "lambda grid (stability default: derived from the data)")->delimiter(',');
  s->add_option("--gammas", sel.gammas, "cv: gamma grid")->delimiter(',');
  s->add_option("--subsamples", sel.subsamples, "stability: number of subsamples")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--fraction", sel.fraction, "stability: subsample fraction")->capture_default_str();
  s->add_option("--threshold", sel.threshold, "stability: selection threshold")->capture_default_str();
  s->add_option("--max-false-edges", sel.max_false_edges, "stability: false-edge budget for the chosen lambda")->capture_default_str();
  s->add_option("--grid-size", sel.grid_size, "stability: derived grid size")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--grid-ratio", sel.grid_ratio, "stability: smallest/largest derived lambda")->capture_default_str();
  s->add_option("--folds", sel.folds, "cv: number of folds")->capture_default_str();
  s->add_option("--seed", sel.seed, "random seed")->capture_default_str();
  s->add_option("--threads", sel.threads, "worker threads (0 = all cores)")->capture_default_str();
  s->add_option("--out", sel.out, "output directory")->capture_default_str();
  sel.solver.add_to(s);

  fs::path ex_model, ex_json = "edges.json", ex_dot = "structure.dot";
  auto* x = app.add_subcommand("export-structure", "write the task graph as an edge list and DOT");
  x->add_option("--model", ex_model, "model JSON")->required();
  x->add_option("--json", ex_json, "edge list JSON path")->capture_default_str();
  x->add_option("--dot", ex_dot, "DOT path")->capture_default_str();

  detail::BenchOptions bench;
  auto* b = app.add_subcommand("bench", "reproduce the clustered-task RMSE comparison over many seeds");
  b->add_flag("--paper-synthetic", bench.paper_synthetic, "13-task clustered benchmark, p-MSSL vs OLS");
  b->add_option("--runs", bench.runs, "number of seeded runs")->check(CLI::PositiveNumber)->capture_default_str();
  b->add_option("--seed", bench.seed, "seed of the first run")->capture_default_str();
  b->add_option("--lambda", bench.lambda, "p-MSSL lambda")->check(CLI::NonNegativeNumber)->capture_default_str();
  b->add_option("--gamma", bench.gamma, "p-MSSL gamma")->check(CLI::NonNegativeNumber)->capture_default_str();
  b->add_option("--threads", bench.threads, "worker threads (0 = all cores)")->capture_default_str();
  b->add_option("--out", bench.out, "output directory")->capture_default_str();
  bench.solver.add_to(b);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? ok : usage_error;
  }

  try {
    if (g->parsed()) return detail::run_generate(gen, out);
    if (t->parsed()) return detail::run_train(tr, out, err);
    if (p->parsed()) return detail::run_predict(pred_model, pred_data, pred_out, out);
    if (e->parsed()) return detail::run_evaluate(ev_model, ev_data, ev_out, out);
    if (s->parsed()) return detail::run_select(sel, out);
    if (x->parsed()) return detail::run_export(ex_model, ex_json, ex_dot, out);
    if (b->parsed()) return detail::run_bench(bench, out, err);
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << "\n";
    return numeric_failure;
  } catch (const DataError& ex) {
    err << "error: " << ex.what() << "\n";
    return usage_error;
  } catch (const InvalidArgument& ex) {
    err << "error: " << ex.what() << "\n";
    return usage_error;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return usage_error;
  }
  return usage_error;
}

}  // namespace mssl::cli
