#include "mixem/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <Eigen/Cholesky>

#include "mixem/io.hpp"

namespace mixem {

namespace {

GmmParams two_gaussian_model(double mu2) {
  GmmParams p;
  p.mode = CovMode::Full;
  p.weights = Vector::Constant(2, 0.5);
  p.means = {Vector::Zero(2), Vector::Constant(2, mu2)};
  p.covariances = {Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  return p;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  }
  return out;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ModelSpec builtin_model(const std::string& name) {
  if (name == "paper-1") return {name, two_gaussian_model(3.0)};
  if (name == "paper-2") return {name, two_gaussian_model(2.0)};
  if (name == "paper-3") return {name, two_gaussian_model(1.0)};
  // The larger models were never published exactly; these are seeded
  // stand-ins with roughly comparable size and overlap.
  if (name == "paper-4") return random_model(name, 10, 2, 2.0, 9004);
  if (name == "paper-5") return random_model(name, 20, 2, 2.0, 9005);
  if (name == "paper-6") return random_model(name, 5, 5, 2.0, 9006);
  throw ConstraintError("unknown builtin model: " + name);
}

std::vector<std::string> builtin_model_names() {
  return {"paper-1", "paper-2", "paper-3", "paper-4", "paper-5", "paper-6"};
}

ModelSpec random_model(const std::string& name, int components, int dim, double separation,
                       std::uint64_t seed) {
  if (components < 1 || dim < 1) throw ConstraintError("model needs components >= 1, dim >= 1");
  if (!(separation > 0.0)) throw ConstraintError("separation must be positive");
  Rng rng(seed);

  GmmParams p;
  p.mode = CovMode::Full;
  p.weights.resize(components);
  for (int j = 0; j < components; ++j) p.weights[j] = rng.exponential();
  p.weights /= p.weights.sum();
  // Keep every true component carrying real mass.
  p.weights = (0.7 * p.weights.array() + 0.3 / components).matrix();

  p.means.resize(components);
  for (int j = 0; j < components; ++j) {
    Vector mu(dim);
    for (int d = 0; d < dim; ++d) mu[d] = rng.uniform(0.0, 10.0);
    p.means[j] = mu;
  }

  // Typical nearest-neighbor spacing of `components` uniform points in
  // [0,10]^dim, shrunk by the separation factor, sets the noise scale.
  const double spacing = 10.0 * std::pow(1.0 / components, 1.0 / dim);
  const double scale2 = std::pow(spacing / separation, 2.0);
  p.covariances.resize(components);
  for (int j = 0; j < components; ++j) {
    Matrix a(dim, dim);
    for (int r = 0; r < dim; ++r) {
      for (int c = 0; c < dim; ++c) a(r, c) = rng.normal();
    }
    Matrix shape = (a * a.transpose() / dim + 0.3 * Matrix::Identity(dim, dim)) / 1.3;
    p.covariances[j] = scale2 * shape;
  }
  return {name, p};
}

Dataset generate_dataset(const ModelSpec& spec, long n, Rng& rng) {
  require_valid(spec.params);
  if (n < 1) throw ConstraintError("dataset size must be positive");
  const int m = spec.params.components();
  const int d = spec.params.dim();

  std::vector<Matrix> chol(m);
  for (int j = 0; j < m; ++j) {
    if (spec.params.mode == CovMode::Full) {
      chol[j] = Eigen::LLT<Matrix>(spec.params.covariances[j]).matrixL();
    } else {
      chol[j] = spec.params.variances[j].cwiseSqrt().asDiagonal();
    }
  }
  std::vector<double> cum(m);
  double acc = 0.0;
  for (int j = 0; j < m; ++j) {
    acc += spec.params.weights[j];
    cum[j] = acc;
  }

  Dataset out;
  out.points.resize(n, d);
  Vector z(d);
  for (long i = 0; i < n; ++i) {
    const double u = rng.uniform();
    int j = 0;
    while (j + 1 < m && u > cum[j]) ++j;
    for (int k = 0; k < d; ++k) z[k] = rng.normal();
    out.points.row(i) = (spec.params.means[j] + chol[j] * z).transpose();
  }
  return out;
}

GmmParams init_params(const Dataset& data, int components, CovMode mode, Rng& rng) {
  if (components < 1) throw ConstraintError("need at least one component");
  if (data.size() < 2) throw ConstraintError("need at least two data points");
  const int d = data.dim();

  Vector lo(d), hi(d);
  for (int p = 0; p < d; ++p) {
    lo[p] = data.points.col(p).minCoeff();
    hi[p] = data.points.col(p).maxCoeff();
  }
  if ((hi - lo).maxCoeff() <= 0.0) throw ConstraintError("all data points are identical");

  GmmParams out;
  out.mode = mode;
  out.weights.resize(components);
  for (int j = 0; j < components; ++j) out.weights[j] = rng.exponential();
  out.weights /= out.weights.sum();

  out.means.resize(components);
  for (int j = 0; j < components; ++j) {
    for (int attempt = 0;; ++attempt) {
      Vector mu(d);
      for (int p = 0; p < d; ++p) mu[p] = rng.uniform(lo[p], hi[p]);
      bool coincident = false;
      for (int k = 0; k < j && !coincident; ++k) coincident = (mu == out.means[k]);
      if (!coincident) {
        out.means[j] = std::move(mu);
        break;
      }
      if (attempt >= 100) throw ConstraintError("could not sample distinct centers");
    }
  }

  Vector iso(components);
  if (components == 1) {
    // No neighboring center exists; size the spread from the data itself.
    Vector v(d);
    for (int p = 0; p < d; ++p) {
      const double mean = data.points.col(p).mean();
      v[p] = data.points.col(p).squaredNorm() / static_cast<double>(data.size()) - mean * mean;
      v[p] = std::max(v[p], 1e-12);
    }
    if (mode == CovMode::Diagonal) {
      out.variances = {v};
    } else {
      out.covariances = {Matrix(v.asDiagonal())};
    }
    return out;
  }
  for (int j = 0; j < components; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < components; ++k) {
      if (k == j) continue;
      best = std::min(best, (out.means[j] - out.means[k]).squaredNorm());
    }
    iso[j] = best;
  }
  if (mode == CovMode::Diagonal) {
    out.variances.resize(components);
    for (int j = 0; j < components; ++j) out.variances[j] = Vector::Constant(d, iso[j]);
  } else {
    out.covariances.resize(components);
    for (int j = 0; j < components; ++j) {
      out.covariances[j] = iso[j] * Matrix::Identity(d, d);
    }
  }
  return out;
}

GmmParams init_params(const Dataset& data, int components, CovMode mode, std::uint64_t seed) {
  Rng rng(seed);
  return init_params(data, components, mode, rng);
}

BenchConfig builtin_bench_config(const std::string& name) {
  BenchConfig cfg;
  const auto dataset = [](const std::string& model, long n, int fit) {
    DatasetSpec ds;
    ds.name = model;
    ds.model = model;
    ds.n = n;
    ds.fit_components = fit;
    return ds;
  };
  const auto method = [](const std::string& label, Method m, double gamma = 1.5) {
    MethodSpec sp;
    sp.label = label;
    sp.method = m;
    sp.gamma = gamma;
    return sp;
  };

  if (name == "paper-table1") {
    cfg.datasets = {dataset("paper-1", 2000, 2), dataset("paper-2", 2000, 2),
                    dataset("paper-3", 2000, 2)};
    cfg.methods = {method("em", Method::Em),
                   method("cg", Method::Cg),
                   method("cg-em", Method::CgEm),
                   method("cg-em-rp", Method::CgEmRp),
                   method("pem-opt", Method::PemOpt),
                   method("pem-fixed(1.5)", Method::PemFixed, 1.5),
                   method("pem-fixed(1.9)", Method::PemFixed, 1.9)};
    return cfg;
  }
  if (name == "paper-table2-style") {
    cfg.datasets = {dataset("paper-4", 5000, 10), dataset("paper-5", 10000, 20),
                    dataset("paper-6", 20000, 5)};
    cfg.methods = {method("em", Method::Em),
                   method("cg-em", Method::CgEm),
                   method("pem-opt", Method::PemOpt),
                   method("pem-fixed(1.5)", Method::PemFixed, 1.5),
                   method("pem-fixed(1.9)", Method::PemFixed, 1.9)};
    return cfg;
  }
  if (name == "smoke") {
    cfg.inits = 4;
    cfg.datasets = {dataset("paper-1", 400, 2)};
    cfg.methods = {method("em", Method::Em), method("cg-em", Method::CgEm),
                   method("pem-fixed(1.5)", Method::PemFixed, 1.5)};
    return cfg;
  }
  throw ConstraintError("unknown builtin bench config: " + name);
}

std::vector<std::string> builtin_bench_config_names() {
  return {"paper-table1", "paper-table2-style", "smoke"};
}

// ---------------------------------------------------------------------------
// Run matrix

Priors standard_priors(const Dataset& data, int components) {
  Priors pr;
  pr.dirichlet_counts =
      Vector::Constant(components, (components + 1.0) / static_cast<double>(components));
  const int d = data.dim();
  pr.box_lower.resize(d);
  pr.box_upper.resize(d);
  for (int p = 0; p < d; ++p) {
    pr.box_lower[p] = data.points.col(p).minCoeff();
    pr.box_upper[p] = data.points.col(p).maxCoeff();
  }
  pr.variance_df = 1.0 / components;
  pr.variance_scale = 1.0;
  return pr;
}

std::vector<RunRecord> run_matrix(const BenchConfig& config) {
  if (config.datasets.empty() || config.methods.empty() || config.inits < 1) {
    throw ConstraintError("benchmark needs at least one dataset, one method and one init");
  }
  {
    std::vector<std::string> labels;
    for (const auto& m : config.methods) labels.push_back(m.label);
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
      throw ConstraintError("method labels must be unique");
    }
  }

  Rng master(config.seed);
  const int n_ds = static_cast<int>(config.datasets.size());
  const int n_methods = static_cast<int>(config.methods.size());

  // Prepare data and the shared initializations up front, serially, so
  // that the seed fan-out never depends on scheduling.
  std::vector<Dataset> datasets(n_ds);
  std::vector<std::vector<GmmParams>> inits(n_ds);
  std::vector<ObjectiveSpec> specs(n_ds);
  for (int di = 0; di < n_ds; ++di) {
    const DatasetSpec& ds = config.datasets[di];
    Rng ds_rng = master.child(static_cast<std::uint64_t>(di));
    if (!ds.model.empty()) {
      Rng gen = ds_rng.child(0);
      datasets[di] = generate_dataset(builtin_model(ds.model), ds.n, gen);
    } else if (!ds.file.empty()) {
      datasets[di] = read_dataset(ds.file);
    } else {
      throw ConstraintError("dataset spec needs a model or a file: " + ds.name);
    }
    if (config.map && ds.mode != CovMode::Diagonal) {
      throw ConstraintError("MAP benchmarks require diagonal mode: " + ds.name);
    }
    specs[di] = config.map
                    ? ObjectiveSpec::map(standard_priors(datasets[di], ds.fit_components))
                    : ObjectiveSpec::ml();
    inits[di].reserve(config.inits);
    for (int j = 0; j < config.inits; ++j) {
      Rng init_rng = ds_rng.child(1 + static_cast<std::uint64_t>(j));
      inits[di].push_back(init_params(datasets[di], ds.fit_components, ds.mode, init_rng));
    }
  }

  struct Cell {
    int ds, init, method;
  };
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(n_ds) * config.inits * n_methods);
  for (int di = 0; di < n_ds; ++di) {
    for (int j = 0; j < config.inits; ++j) {
      for (int mi = 0; mi < n_methods; ++mi) cells.push_back({di, j, mi});
    }
  }

  std::vector<RunRecord> records(cells.size());
  const auto run_cell = [&](const Cell& c) {
    const MethodSpec& ms = config.methods[c.method];
    FitOptions opt;
    opt.method = ms.method;
    opt.hybrid = ms.hybrid;
    opt.chart = ms.chart;
    opt.gamma = ms.gamma;
    opt.objective = specs[c.ds];
    opt.stop = config.stop;
    opt.max_iters = config.max_iters;
    opt.prune = config.map;
    RunRecord rec = fit(datasets[c.ds], inits[c.ds][c.init], opt);
    rec.method = ms.label;
    rec.dataset = config.datasets[c.ds].name;
    rec.seed = config.seed;
    rec.init_index = c.init;
    return rec;
  };

  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) records[i] = run_cell(cells[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          records[i] = run_cell(cells[i]);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return records;
}

// ---------------------------------------------------------------------------
// Statistics

std::vector<double> per_run_speedups(const std::vector<RunRecord>& records,
                                     const std::string& dataset, const std::string& method_label,
                                     std::vector<int>* init_indices,
                                     std::vector<std::string>* warnings) {
  std::map<int, long> em_iters;
  for (const RunRecord& r : records) {
    if (r.dataset == dataset && r.method == "em" && r.termination == Termination::Converged) {
      em_iters[r.init_index] = r.iterations();
    }
  }
  std::map<int, long> mine;
  for (const RunRecord& r : records) {
    if (r.dataset == dataset && r.method == method_label &&
        r.termination == Termination::Converged) {
      mine[r.init_index] = r.iterations();
    }
  }

  std::vector<double> ratios;
  if (init_indices) init_indices->clear();
  for (const auto& [init, iters] : mine) {
    auto it = em_iters.find(init);
    if (it == em_iters.end()) {
      if (warnings) {
        warnings->push_back("no converged em baseline for " + dataset + " init " +
                            std::to_string(init) + "; " + method_label + " run excluded");
      }
      continue;
    }
    ratios.push_back(static_cast<double>(it->second) / static_cast<double>(iters));
    if (init_indices) init_indices->push_back(init);
  }
  return ratios;
}

double bootstrap_paired_test(const std::vector<double>& best, const std::vector<double>& other,
                             int resamples, std::uint64_t seed) {
  if (best.size() != other.size()) throw ConstraintError("paired samples differ in length");
  const std::size_t n = best.size();
  if (n == 0) throw ConstraintError("paired test needs at least one pair");
  if (resamples < 1) throw ConstraintError("need at least one resample");

  std::vector<double> diff(n);
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = best[i] - other[i];
    observed += diff[i];
  }
  observed /= static_cast<double>(n);
  for (double& d : diff) d -= observed;
  // Sorting makes the resampling independent of how the pairs were ordered.
  std::sort(diff.begin(), diff.end());

  Rng rng(seed);
  long at_or_above = 0;
  for (int k = 0; k < resamples; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += diff[rng.uniform_index(n)];
    if (s / static_cast<double>(n) >= observed) ++at_or_above;
  }
  return (1.0 + static_cast<double>(at_or_above)) / (static_cast<double>(resamples) + 1.0);
}

// ---------------------------------------------------------------------------
// Aggregation

BenchReport aggregate(const std::vector<RunRecord>& records, int bootstrap_resamples,
                      std::uint64_t bootstrap_seed) {
  BenchReport report;
  std::vector<std::string> ds_order;
  for (const RunRecord& r : records) {
    if (std::find(ds_order.begin(), ds_order.end(), r.dataset) == ds_order.end()) {
      ds_order.push_back(r.dataset);
    }
  }

  for (const std::string& ds : ds_order) {
    DatasetSummary sum;
    sum.name = ds;

    std::vector<std::string> labels;
    for (const RunRecord& r : records) {
      if (r.dataset != ds) continue;
      sum.inits = std::max(sum.inits, r.init_index + 1);
      if (std::find(labels.begin(), labels.end(), r.method) == labels.end()) {
        labels.push_back(r.method);
      }
    }

    for (const std::string& label : labels) {
      MethodSummary m;
      m.label = label;
      double iter_sum = 0.0;
      for (const RunRecord& r : records) {
        if (r.dataset != ds || r.method != label) continue;
        ++m.runs;
        if (r.termination == Termination::Converged) {
          ++m.converged;
          iter_sum += static_cast<double>(r.iterations());
          m.iters_by_init.emplace_back(r.init_index, r.iterations());
        }
      }
      m.mean_iters = m.converged > 0 ? iter_sum / m.converged : 0.0;
      m.speedups = per_run_speedups(records, ds, label, &m.speedup_inits, &sum.warnings);
      const std::size_t n = m.speedups.size();
      if (n > 0) {
        double mean = 0.0;
        for (double v : m.speedups) mean += v;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (double v : m.speedups) ss += (v - mean) * (v - mean);
        m.mean_speedup = mean;
        m.sd_speedup = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        m.ci95 = 1.96 * m.sd_speedup / std::sqrt(static_cast<double>(n));
      }
      for (const RunRecord& r : records) {
        if (r.dataset == ds && r.method == label && r.termination == Termination::Converged) {
          if (label == "em") sum.em_iters.emplace_back(r.init_index, r.iterations());
        }
      }
      sum.methods.push_back(std::move(m));
    }

    // The best method by mean speed-up anchors the significance tests.
    int best = -1;
    for (std::size_t i = 0; i < sum.methods.size(); ++i) {
      if (sum.methods[i].speedups.empty()) continue;
      if (best < 0 || sum.methods[i].mean_speedup > sum.methods[best].mean_speedup) {
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      MethodSummary& bm = sum.methods[best];
      bm.best = true;
      bm.comparable = true;
      bm.p_vs_best = 1.0;
      for (MethodSummary& m : sum.methods) {
        if (m.best || m.speedups.empty()) continue;
        // Pair the two methods on the inits both converged on.
        std::vector<double> a, b;
        for (std::size_t i = 0; i < bm.speedup_inits.size(); ++i) {
          const auto it =
              std::find(m.speedup_inits.begin(), m.speedup_inits.end(), bm.speedup_inits[i]);
          if (it == m.speedup_inits.end()) continue;
          a.push_back(bm.speedups[i]);
          b.push_back(m.speedups[static_cast<std::size_t>(it - m.speedup_inits.begin())]);
        }
        if (a.empty()) continue;
        m.p_vs_best = bootstrap_paired_test(a, b, bootstrap_resamples, bootstrap_seed);
        m.comparable = m.p_vs_best > 0.05;
      }
    }

    // Flag inits where the converged methods tell different stories.
    for (int init = 0; init < sum.inits; ++init) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      int seen = 0;
      for (const RunRecord& r : records) {
        if (r.dataset != ds || r.init_index != init || r.termination != Termination::Converged) {
          continue;
        }
        lo = std::min(lo, r.final_objective);
        hi = std::max(hi, r.final_objective);
        ++seen;
      }
      if (seen >= 2 && hi - lo > 1e-3) sum.flagged_inits.push_back(init);
    }

    report.datasets.push_back(std::move(sum));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report files

namespace {

void emit_tables(const BenchReport& report, const std::filesystem::path& dir) {
  for (const DatasetSummary& ds : report.datasets) {
    {
      std::ofstream out(dir / ("table_" + sanitize(ds.name) + ".tsv"));
      out << "method\truns\tconverged\tmean_iters\tmean_speedup\tsd_speedup\tci95\tp_vs_best\t"
             "marker\n";
      for (const MethodSummary& m : ds.methods) {
        out << m.label << '\t' << m.runs << '\t' << m.converged << '\t' << g17(m.mean_iters)
            << '\t' << g17(m.mean_speedup) << '\t' << g17(m.sd_speedup) << '\t' << g17(m.ci95)
            << '\t' << g17(m.p_vs_best) << '\t' << (m.comparable ? "*" : "") << '\n';
      }
    }
    for (const MethodSummary& m : ds.methods) {
      if (m.label == "em") continue;
      std::ofstream out(dir /
                        ("scatter_" + sanitize(ds.name) + "_" + sanitize(m.label) + ".tsv"));
      out << "init\tem_iters\tmethod_iters\n";
      for (const auto& [init, mine] : m.iters_by_init) {
        long em = -1;
        for (const auto& [ej, it] : ds.em_iters) {
          if (ej == init) {
            em = it;
            break;
          }
        }
        if (em < 0) continue;
        out << init << '\t' << em << '\t' << mine << '\n';
      }
    }
    {
      std::ofstream out(dir / ("hist_" + sanitize(ds.name) + "_em.tsv"));
      out << "init\tem_iters\n";
      for (const auto& [init, iters] : ds.em_iters) out << init << '\t' << iters << '\n';
    }
  }
}

void emit_text(const BenchReport& report, const std::filesystem::path& dir) {
  std::ofstream out(dir / "summary.txt");
  char buf[256];
  out << "benchmark summary\n";
  for (const DatasetSummary& ds : report.datasets) {
    out << "\ndataset " << ds.name << " (" << ds.inits << " inits)\n";
    std::snprintf(buf, sizeof buf, "  %-16s %5s %5s %12s %10s %12s %10s %s\n", "method", "runs",
                  "conv", "mean-iters", "speedup", "95% CI", "p(best)", "");
    out << buf;
    for (const MethodSummary& m : ds.methods) {
      std::snprintf(buf, sizeof buf, "  %-16s %5d %5d %12.1f %10.3f ~ %9.3f %10.4f %s\n",
                    m.label.c_str(), m.runs, m.converged, m.mean_iters, m.mean_speedup, m.ci95,
                    m.p_vs_best, m.best ? "best" : (m.comparable ? "*" : ""));
      out << buf;
    }
    out << "  (* = not significantly worse than the best, one-sided paired bootstrap p > 0.05)\n";

    if (ds.flagged_inits.empty()) {
      out << "  disagreements: none\n";
    } else {
      out << "  disagreements (final objectives > 1e-3 apart): inits";
      for (int i : ds.flagged_inits) out << ' ' << i;
      out << '\n';
    }

    if (!ds.em_iters.empty()) {
      long lo = ds.em_iters.front().second, hi = lo;
      for (const auto& [_, it] : ds.em_iters) {
        lo = std::min(lo, it);
        hi = std::max(hi, it);
      }
      const int bins = 10;
      const double width = std::max(1.0, (static_cast<double>(hi) - lo) / bins);
      std::vector<int> counts(bins, 0);
      for (const auto& [_, it] : ds.em_iters) {
        int b = static_cast<int>((it - lo) / width);
        counts[std::min(b, bins - 1)]++;
      }
      out << "  em iteration histogram:\n";
      for (int b = 0; b < bins; ++b) {
        std::snprintf(buf, sizeof buf, "    [%8.1f, %8.1f): ", lo + b * width,
                      lo + (b + 1) * width);
        out << buf << std::string(static_cast<std::size_t>(counts[b]), '#') << ' ' << counts[b]
            << '\n';
      }
    }

    for (const std::string& w : ds.warnings) out << "  warning: " << w << '\n';
  }
}

}  // namespace

void emit_report(const BenchReport& report, const std::string& out_dir, ReportFormat format) {
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  if (format == ReportFormat::DelimitedTable) {
    emit_tables(report, dir);
  } else {
    emit_text(report, dir);
  }
}

void emit_report(const std::vector<RunRecord>& records, const std::string& out_dir,
                 ReportFormat format) {
  if (records.empty()) throw ConstraintError("no records to report on");
  emit_report(aggregate(records), out_dir, format);
}

}  // namespace mixem
