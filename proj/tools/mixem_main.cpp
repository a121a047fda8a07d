// mixem — dataset generation, single fits, benchmark matrices and
// report rendering for the mixture-estimation library.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixem/bench.hpp"
#include "mixem/io.hpp"
#include "mixem/optimize.hpp"
#include "mixem/rng.hpp"
#include "mixem/types.hpp"

namespace {

using namespace mixem;

// Exit codes. Usage errors (bad flags, failed validation) are 64; other
// failures while running are 1. `fit` maps its termination status so
// scripts can tell convergence from budget exhaustion and degeneracy.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitLineSearchDead = 2;
constexpr int kExitMaxIters = 3;
constexpr int kExitDegenerate = 4;
constexpr int kExitFlatRegion = 5;
constexpr int kExitUsage = 64;

int exit_code_for(Termination t) {
  switch (t) {
    case Termination::Converged: return kExitOk;
    case Termination::LineSearchDead: return kExitLineSearchDead;
    case Termination::MaxIters: return kExitMaxIters;
    case Termination::FlatRegion: return kExitFlatRegion;
    case Termination::PruneRequested:  // never escapes fit(); defensive
    case Termination::Failed: return kExitDegenerate;
  }
  return kExitDegenerate;
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

// A model reference is a builtin name or a parameter file path.
ModelSpec resolve_model(const std::string& ref) {
  const std::vector<std::string> names = builtin_model_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) return builtin_model(ref);
  if (std::filesystem::exists(ref)) {
    return ModelSpec{std::filesystem::path(ref).stem().string(), read_params(ref)};
  }
  throw IoError("unknown model '" + ref + "': not a builtin (" + join(names) +
                ") and no such file");
}

// A config reference is a builtin name or a config file path.
BenchConfig resolve_config(const std::string& ref) {
  const std::vector<std::string> names = builtin_bench_config_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) return builtin_bench_config(ref);
  if (std::filesystem::exists(ref)) return read_bench_config(ref);
  throw IoError("unknown config '" + ref + "': not a builtin (" + join(names) +
                ") and no such file");
}

void print_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::ostringstream ss;
  ss << in.rdbuf();
  std::fputs(ss.str().c_str(), stdout);
}

struct GenerateArgs {
  std::string model;
  long n = 2000;
  std::uint64_t seed = 59;
  std::string out;
};

int run_generate(const GenerateArgs& a) {
  const ModelSpec spec = resolve_model(a.model);
  Rng rng(a.seed);
  const Dataset data = generate_dataset(spec, a.n, rng);
  std::ostringstream comment;
  comment << "model " << spec.name << "\nn " << a.n << " seed " << a.seed;
  write_dataset(data, a.out, comment.str());
  std::printf("wrote %s: n=%ld d=%d model=%s\n", a.out.c_str(), data.size(), data.dim(),
              spec.name.c_str());
  return kExitOk;
}

struct FitArgs {
  std::string data;
  int m = 0;
  std::string method;
  double gamma = 1.5;
  std::string chart = "natural";
  std::string objective = "ml";
  std::string mode = "auto";
  std::string stop = "abs";
  double threshold = 1e-5;
  long max_iters = 50000;
  std::uint64_t seed = 59;
  bool prune = false;
  std::string out;
};

int run_fit(const FitArgs& a) {
  const Dataset data = read_dataset(a.data);
  const bool map = a.objective == "map";
  if (map && a.mode == "full") {
    std::fprintf(stderr, "mixem fit: MAP fits are diagonal-only; drop --mode full\n");
    return kExitUsage;
  }
  const CovMode mode =
      a.mode == "diagonal" || (a.mode == "auto" && map) ? CovMode::Diagonal : CovMode::Full;

  const GmmParams init = init_params(data, a.m, mode, a.seed);

  FitOptions opt;
  opt.method = method_from_name(a.method);
  opt.hybrid = true;  // accelerators always run under the hybrid driver
  opt.chart = a.chart == "omega" ? Chart::Omega : Chart::Natural;
  opt.gamma = a.gamma;
  opt.objective = map ? ObjectiveSpec::map(standard_priors(data, a.m)) : ObjectiveSpec::ml();
  opt.stop.kind = a.stop == "scaled" ? StoppingRule::Kind::Scaled : StoppingRule::Kind::Absolute;
  opt.stop.threshold = a.threshold;
  opt.max_iters = a.max_iters;
  opt.prune = a.prune;

  RunRecord rec = fit(data, init, opt);
  rec.dataset = a.data;
  rec.seed = a.seed;
  rec.init_index = 0;

  write_run_record(rec, a.out);
  const std::string params_path = a.out + ".params";
  if (rec.has_params) write_params(rec.final_params, params_path);

  std::printf("method %s\ntermination %s\nem-equivalent iterations %ld\nfinal objective %.17g\n",
              rec.method.c_str(), termination_name(rec.termination).c_str(), rec.iterations(),
              rec.final_objective);
  std::printf("wrote %s%s\n", a.out.c_str(),
              rec.has_params ? (" and " + params_path).c_str() : "");
  if (!rec.diagnostics.empty()) std::fprintf(stderr, "diagnostics: %s\n", rec.diagnostics.c_str());
  return exit_code_for(rec.termination);
}

struct BenchArgs {
  std::string config;
  std::string out_dir;
  int jobs = 0;
  std::string format = "both";
};

int run_bench(const BenchArgs& a) {
  BenchConfig cfg = resolve_config(a.config);
  if (a.jobs > 0) cfg.jobs = a.jobs;

  std::filesystem::create_directories(a.out_dir);
  const std::vector<RunRecord> records = run_matrix(cfg);

  char name[32];
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::snprintf(name, sizeof name, "run-%05zu.txt", i);
    write_run_record(records[i], (std::filesystem::path(a.out_dir) / name).string());
  }
  write_bench_config(cfg, (std::filesystem::path(a.out_dir) / "config.txt").string());

  const BenchReport report = aggregate(records);
  if (a.format != "text") emit_report(report, a.out_dir, ReportFormat::DelimitedTable);
  if (a.format != "table") emit_report(report, a.out_dir, ReportFormat::FormattedText);

  long failed = 0;
  for (const auto& r : records) {
    if (r.termination == Termination::Failed) ++failed;
  }
  if (failed > 0) std::fprintf(stderr, "warning: %ld of %zu runs failed\n", failed, records.size());

  if (a.format == "table") {
    std::printf("wrote %zu run records and delimited tables to %s\n", records.size(),
                a.out_dir.c_str());
  } else {
    print_file((std::filesystem::path(a.out_dir) / "summary.txt").string());
  }
  return kExitOk;
}

struct ReportArgs {
  std::string records;
  std::string format = "text";
  std::string out_dir;
};

int run_report(const ReportArgs& a) {
  std::vector<std::string> errors;
  const std::vector<RunRecord> records = read_run_records_dir(a.records, &errors);
  for (const auto& e : errors) std::fprintf(stderr, "warning: skipped %s\n", e.c_str());
  if (records.empty()) {
    std::fprintf(stderr, "mixem report: no readable run records in %s\n", a.records.c_str());
    return kExitRuntime;
  }

  const std::string out = a.out_dir.empty() ? a.records : a.out_dir;
  std::filesystem::create_directories(out);
  const BenchReport report = aggregate(records);
  if (a.format != "text") emit_report(report, out, ReportFormat::DelimitedTable);
  if (a.format != "table") emit_report(report, out, ReportFormat::FormattedText);

  if (a.format == "table") {
    std::printf("wrote delimited tables for %zu records to %s\n", records.size(), out.c_str());
  } else {
    print_file((std::filesystem::path(out) / "summary.txt").string());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixem: mixture-model estimation with EM, gradient and conjugate-gradient\n"
               "accelerations, plus the benchmark harness that compares them."};
  app.require_subcommand(1);

  const std::string methods = join({"em", "ga-fixed", "ga-opt", "cg", "cg-em", "cg-em-rp",
                                    "pem-fixed", "pem-opt"});
  std::ostringstream footer;
  footer << "Methods: " << methods << "\n"
         << "Builtin models: " << join(builtin_model_names()) << "\n"
         << "Builtin bench configs: " << join(builtin_bench_config_names()) << "\n"
         << "\n"
         << "Exit codes: 0 success/converged; 1 runtime error; 64 usage error.\n"
         << "fit only: 2 line search dead, 3 iteration budget exhausted,\n"
         << "4 degenerate model, 5 flat region.";
  app.footer(footer.str());

  GenerateArgs gen;
  CLI::App* cgen = app.add_subcommand("generate", "Sample a synthetic dataset from a model");
  cgen->add_option("--model", gen.model, "Builtin model name or parameter file (" +
                                             join(builtin_model_names()) + ")")
      ->required();
  cgen->add_option("--n", gen.n, "Number of points to draw")
      ->capture_default_str()
      ->check(CLI::Range(1L, std::numeric_limits<long>::max()));
  cgen->add_option("--seed", gen.seed, "Generator seed")
      ->envname("MIXEM_SEED")
      ->capture_default_str();
  cgen->add_option("--out", gen.out, "Dataset file to write")->required();

  FitArgs fit;
  CLI::App* cfit = app.add_subcommand("fit", "Fit a mixture to a dataset with one method");
  cfit->add_option("--data", fit.data, "Dataset file")->required();
  cfit->add_option("--m", fit.m, "Number of mixture components")
      ->required()
      ->check(CLI::Range(1, std::numeric_limits<int>::max()));
  cfit->add_option("--method", fit.method, "Optimizer (" + methods + ")")
      ->required()
      ->check(CLI::IsMember({"em", "ga-fixed", "ga-opt", "cg", "cg-em", "cg-em-rp", "pem-fixed",
                             "pem-opt"}));
  cfit->add_option("--gamma", fit.gamma, "Step length of the fixed-step methods")
      ->capture_default_str();
  cfit->add_option("--chart", fit.chart, "Weight parameterization")
      ->check(CLI::IsMember({"natural", "omega"}))
      ->capture_default_str();
  cfit->add_option("--objective", fit.objective,
                   "ml, or map with the standard data-derived priors")
      ->check(CLI::IsMember({"ml", "map"}))
      ->capture_default_str();
  cfit->add_option("--mode", fit.mode, "Covariance structure (auto: full for ml, diagonal for map)")
      ->check(CLI::IsMember({"auto", "full", "diagonal"}))
      ->capture_default_str();
  cfit->add_option("--stop", fit.stop, "Stopping rule on the objective change")
      ->check(CLI::IsMember({"abs", "scaled"}))
      ->capture_default_str();
  cfit->add_option("--threshold", fit.threshold, "Stopping threshold")->capture_default_str();
  cfit->add_option("--max-iters", fit.max_iters, "Budget in EM-equivalent iterations")
      ->capture_default_str();
  cfit->add_option("--seed", fit.seed, "Initialization seed")
      ->envname("MIXEM_SEED")
      ->capture_default_str();
  cfit->add_flag("--prune", fit.prune, "Prune starved/collapsed components and restart");
  cfit->add_option("--out", fit.out, "Run record file to write (parameters go to <out>.params)")
      ->required();

  BenchArgs bench;
  CLI::App* cbench = app.add_subcommand("bench", "Run a benchmark matrix and emit reports");
  cbench->add_option("--config", bench.config, "Builtin config name or config file (" +
                                                   join(builtin_bench_config_names()) + ")")
      ->required();
  cbench->add_option("--out-dir", bench.out_dir, "Directory for run records and reports")
      ->required();
  cbench->add_option("--jobs", bench.jobs, "Worker threads (0 keeps the config's value)")
      ->capture_default_str();
  cbench->add_option("--format", bench.format, "Report format(s) to write")
      ->check(CLI::IsMember({"table", "text", "both"}))
      ->capture_default_str();

  ReportArgs report;
  CLI::App* creport = app.add_subcommand("report", "Re-render reports from stored run records");
  creport->add_option("--records", report.records, "Directory of run-*.txt records")->required();
  creport->add_option("--format", report.format, "Report format(s) to write")
      ->check(CLI::IsMember({"table", "text", "both"}))
      ->capture_default_str();
  creport->add_option("--out-dir", report.out_dir,
                      "Where to write the rendered report (default: the records directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (cgen->parsed()) return run_generate(gen);
    if (cfit->parsed()) return run_fit(fit);
    if (cbench->parsed()) return run_bench(bench);
    if (creport->parsed()) return run_report(report);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mixem: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
