#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mixem/optimize.hpp"
#include "mixem/rng.hpp"
#include "mixem/types.hpp"

namespace mixem {

/// Ground-truth generator for a synthetic dataset.
struct ModelSpec {
  std::string name;
  GmmParams params;
};

/// Builtin generators. paper-1/2/3 are the two-component 2-d models
/// (equal weights, identity covariances, means (0,0) and (3,3), (2,2),
/// (1,1) respectively). paper-4/5/6 are seeded random stand-ins for the
/// larger models, which were never published exactly: 10x2-d, 20x2-d
/// and 5x5-d mixtures with moderate overlap.
ModelSpec builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

/// Seeded random mixture: Dirichlet(1) weights, means uniform in
/// [0, 10]^d, random SPD covariances scaled so that `separation`
/// roughly controls how much neighboring components overlap (larger =
/// easier).
ModelSpec random_model(const std::string& name, int components, int dim, double separation,
                       std::uint64_t seed);

/// N i.i.d. draws: categorical component pick, then a normal draw
/// through the Cholesky factor of that component's covariance.
Dataset generate_dataset(const ModelSpec& spec, long n, Rng& rng);

/// The initialization the benchmarks share: weights uniform on the
/// simplex, means uniform in the bounding hypercube of the data, and
/// isotropic (co)variances equal to the squared distance from each mean
/// to its nearest neighboring mean. With a single component that
/// distance does not exist and the per-dimension data variance is used
/// instead. Centers that collide exactly are resampled (at most 100
/// times each).
GmmParams init_params(const Dataset& data, int components, CovMode mode, Rng& rng);
GmmParams init_params(const Dataset& data, int components, CovMode mode, std::uint64_t seed);

/// The default posterior regularization: a Dirichlet(1 + 1/M) pull on
/// the weights, a uniform box over the data's bounding hypercube for
/// the means, and a weak inverse-chi-squared prior (df = 1/M, scale 1)
/// on each variance.
Priors standard_priors(const Dataset& data, int components);

struct MethodSpec {
  std::string label;          // row label; must be unique within a config
  Method method = Method::Em;
  Chart chart = Chart::Natural;
  double gamma = 1.5;
  bool hybrid = true;
};

struct DatasetSpec {
  std::string name;
  std::string model;  // builtin model name; empty when reading from file
  std::string file;   // dataset file path; empty when generating
  long n = 2000;
  int fit_components = 2;
  CovMode mode = CovMode::Full;
};

struct BenchConfig {
  std::uint64_t seed = 59;
  int inits = 40;
  StoppingRule stop;
  long max_iters = 50000;
  bool map = false;  // fit the posterior with the standard priors instead of the likelihood
  int jobs = 1;
  std::vector<DatasetSpec> datasets;
  std::vector<MethodSpec> methods;
};

/// Builtin configurations: "paper-table1" (models 1-3, 40 inits, the
/// seven-method comparison), "paper-table2-style" (the three large
/// stand-in models with the five-method comparison; long-running) and
/// "smoke" (a minutes-to-seconds shrink of table1 for quick checks).
BenchConfig builtin_bench_config(const std::string& name);
std::vector<std::string> builtin_bench_config_names();

/// The full experiment: per dataset, generate data and `inits` shared
/// initializations, then fit every method from every initialization.
/// Runs execute in parallel across `jobs` threads; the record order
/// (dataset-major, then init, then method) and every record byte are
/// independent of the thread count. Individual run failures are
/// recorded, never fatal.
std::vector<RunRecord> run_matrix(const BenchConfig& config);

/// Per-run speed-up ratios of `method_label` against the "em" baseline
/// on `dataset`, paired by initialization; a pair contributes only when
/// both runs converged. Ratios are EM's iteration count over the
/// method's, ordered by init index (matching `init_indices` when given).
/// Pairs missing a usable EM run are excluded with a warning.
std::vector<double> per_run_speedups(const std::vector<RunRecord>& records,
                                     const std::string& dataset, const std::string& method_label,
                                     std::vector<int>* init_indices = nullptr,
                                     std::vector<std::string>* warnings = nullptr);

inline constexpr std::uint64_t kBootstrapSeed = 0x626f6f74;

/// One-sided paired bootstrap (shift method): H1 is mean(best) >
/// mean(other). The paired differences are recentered to mean zero,
/// resampled K times, and the p-value is the (add-one smoothed)
/// fraction of resampled means at or above the observed mean
/// difference. Deterministic for a fixed seed and invariant to the
/// order of the pairs.
double bootstrap_paired_test(const std::vector<double>& best, const std::vector<double>& other,
                             int resamples = 10000, std::uint64_t seed = kBootstrapSeed);

struct MethodSummary {
  std::string label;
  int runs = 0;
  int converged = 0;
  double mean_iters = 0.0;  // over converged runs
  std::vector<std::pair<int, long>> iters_by_init;  // converged runs only
  std::vector<int> speedup_inits;
  std::vector<double> speedups;
  double mean_speedup = 0.0;
  double sd_speedup = 0.0;
  double ci95 = 0.0;  // half-width, normal approximation
  double p_vs_best = 1.0;
  bool best = false;
  bool comparable = false;  // not significantly worse than the best
};

struct DatasetSummary {
  std::string name;
  int inits = 0;
  std::vector<MethodSummary> methods;
  std::vector<int> flagged_inits;  // converged finals more than 1e-3 apart
  std::vector<std::pair<int, long>> em_iters;  // (init, EM iterations)
  std::vector<std::string> warnings;
};

struct BenchReport {
  std::vector<DatasetSummary> datasets;
};

/// Deterministic reduction of a record list; order of datasets and
/// methods follows first appearance, so re-aggregating records read
/// back from disk reproduces the original report.
BenchReport aggregate(const std::vector<RunRecord>& records, int bootstrap_resamples = 10000,
                      std::uint64_t bootstrap_seed = kBootstrapSeed);

enum class ReportFormat { DelimitedTable, FormattedText };

/// DelimitedTable writes per-dataset table_<ds>.tsv plus plot data:
/// scatter_<ds>_<method>.tsv (EM iterations vs method iterations per
/// init) and hist_<ds>_em.tsv (EM iteration counts). FormattedText
/// writes summary.txt with the same tables rendered for reading,
/// iteration histograms, and the flagged disagreements. All numeric
/// fields print deterministically.
void emit_report(const BenchReport& report, const std::string& out_dir, ReportFormat format);
void emit_report(const std::vector<RunRecord>& records, const std::string& out_dir,
                 ReportFormat format);

}  // namespace mixem
