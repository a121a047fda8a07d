#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mixem/em.hpp"
#include "mixem/gradient.hpp"
#include "mixem/types.hpp"

namespace mixem {

/// Everything one unit of work buys: the objective value, the ascent
/// gradient in the objective's chart, and (for objectives with EM
/// structure) the flattened EM update of the same point. All three come
/// from the same data pass, so a driver that uses any of them has paid
/// exactly one EM-equivalent unit.
struct Evaluation {
  double value = 0.0;
  FlatVector gradient;
  FlatVector em_point;
  bool has_em = false;
  std::string note;  // e.g. variance-floor remedies applied during the update
};

/// Maximization problem as the drivers see it. Implementations must be
/// safe to call concurrently from several threads.
class Objective {
 public:
  virtual ~Objective() = default;

  /// One EM-equivalent unit of work. Callers only evaluate feasible points.
  virtual Evaluation evaluate(const FlatVector& theta) const = 0;

  /// Cheap constraint check used to shrink steps; never a data pass.
  virtual bool feasible(const FlatVector& theta) const = 0;

  /// Flat parameter count; doubles as the default restart period.
  virtual long size() const = 0;

  virtual Chart chart() const { return Chart::Natural; }

  /// Re-imposes exactly representable constraints on an accepted iterate
  /// (weight renormalization and the like). Identity by default.
  virtual FlatVector snap(const FlatVector& theta) const { return theta; }

  /// Strict validity audit of an accepted iterate.
  virtual bool iterate_valid(const FlatVector&) const { return true; }

  /// Signals that the caller should stop and rebuild the problem
  /// (component pruning). Checked after every accepted iterate.
  virtual bool wants_restart(const FlatVector&) const { return false; }
};

/// Mixture log-likelihood / log-posterior objective over a fixed dataset.
class GmmObjective final : public Objective {
 public:
  GmmObjective(const Dataset& data, FlatLayout layout, ObjectiveSpec spec, Chart chart,
               double variance_floor_rel = 1e-6, bool prune = false);

  Evaluation evaluate(const FlatVector& theta) const override;
  bool feasible(const FlatVector& theta) const override;
  long size() const override { return layout_.total(); }
  Chart chart() const override { return chart_; }
  FlatVector snap(const FlatVector& theta) const override;
  bool iterate_valid(const FlatVector& theta) const override;
  bool wants_restart(const FlatVector& theta) const override;

  const FlatLayout& layout() const { return layout_; }
  const ObjectiveSpec& spec() const { return spec_; }
  GmmParams params_at(const FlatVector& theta) const;

 private:
  const Dataset& data_;
  FlatLayout layout_;
  ObjectiveSpec spec_;
  Chart chart_;
  Vector variance_floor_;  // absolute per-dimension floor for the singularity remedy
  bool prune_;
};

/// Work accounting in EM-equivalent units. Every full pass over the
/// data — accepted step, rejected step or line-search probe — charges
/// one unit and appends the objective value it produced; the free
/// initial evaluation seeds the trace, so the trace is always one
/// longer than the count.
struct LedgerEvent {
  long at = 0;  // em_equivalent_count when the event fired
  std::string tag;
  std::string detail;
};

struct IterationLedger {
  long em_equivalent_count = 0;
  std::vector<double> objective_trace;
  std::vector<LedgerEvent> events;

  void start(double initial_value);
  void charge(double value);
  void note(std::string tag, std::string detail = "");
};

struct StoppingRule {
  enum class Kind { Absolute, Scaled };
  Kind kind = Kind::Absolute;
  double threshold = 1e-5;
};

/// Change-in-objective rule over the accepted values of the active
/// method: |last - prev| < threshold (Absolute), or < threshold *
/// (1 + |last|) (Scaled). Fewer than two values never stops.
bool should_stop(const std::vector<double>& accepted, const StoppingRule& rule);

/// Largest gamma in {gamma0 / 2^k, k = 0..60} whose point theta +
/// gamma * dir is feasible. Throws ZeroStepError when sixty halvings
/// find nothing.
double step_shrink_to_feasible(const std::function<bool(const FlatVector&)>& feasible,
                               const FlatVector& theta, const FlatVector& dir, double gamma0);

struct LineSearchConfig {
  int max_trials = 10;          // objective evaluations the search may spend
  double curvature_tol = 0.1;   // success when |phi'(gamma)| <= tol * |phi'(0)|
  double initial_step = 1.0;
  // Smallest objective gain a trial must exceed to count as progress.
  // The drivers derive this from the stopping rule so that an accepted
  // step is always distinguishable from convergence; without the floor
  // a crawling search can feed the stopping rule pairs of nearly equal
  // values far from any optimum and end the run there.
  double min_gain = 0.0;
};

struct LineSearchResult {
  bool success = false;
  double gamma = 0.0;
  int evals_charged = 0;
  FlatVector point;  // theta + gamma * dir, unsnapped
  Evaluation eval;   // evaluation at `point`, reusable by the caller
};

/// Secant search for a root of the directional derivative
/// phi'(gamma) = grad(theta + gamma dir) . dir, using the derivative at
/// gamma = 0 for free from `at_theta`. Every trial charges the ledger.
/// A trial counts only when its gain exceeds config.min_gain; the
/// search succeeds at the first such trial that also meets the
/// curvature criterion, or failing that at the best counting trial
/// seen (the search is deliberately inexact). Fails when no trial
/// clears the floor or the direction is not an ascent direction.
LineSearchResult line_search_secant(const Objective& objective, const FlatVector& theta,
                                    const Evaluation& at_theta, const FlatVector& dir,
                                    const LineSearchConfig& config, IterationLedger& ledger);

enum class Method { Em, GaFixed, GaOpt, Cg, CgEm, CgEmRp, PemFixed, PemOpt };
enum class StepMode { Fixed, Optimized };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct OptimizerConfig {
  StoppingRule stop;
  long max_iters = 50000;  // budget in EM-equivalent units
  double gamma = 1.5;      // step length of the fixed-step methods
  long restart_period = 0;  // conjugate-direction restart; 0 = flat parameter count
  LineSearchConfig line_search;
  double closeness_threshold = 0.5;       // hybrid: objective gain that arms acceleration
  long max_consecutive_fallbacks = 100;   // hybrid: beyond this the region is declared flat
};

enum class Termination { Converged, MaxIters, LineSearchDead, FlatRegion, PruneRequested, Failed };

std::string termination_name(Termination t);
Termination termination_from_name(const std::string& name);

struct RunRecord {
  std::string method;
  std::string config;
  std::string dataset;
  std::uint64_t seed = 0;
  int init_index = -1;
  std::uint64_t init_digest = 0;

  Termination termination = Termination::Failed;
  std::string diagnostics;
  IterationLedger ledger;
  std::vector<double> accepted_objectives;
  double final_objective = 0.0;
  double final_gradient_norm = -1.0;  // negative when unknown
  FlatVector final_theta;
  bool invalid_iterate_seen = false;
  // Positions in accepted_objectives where a prune-restart re-seeded the
  // run; the objective may jump across these benignly.
  std::vector<long> restart_boundaries;

  bool has_params = false;
  GmmParams final_params;

  long iterations() const { return ledger.em_equivalent_count; }
};

/// Plain EM: follow the EM update until the stopping rule fires.
RunRecord run_em(const Objective& objective, const FlatVector& init,
                 const OptimizerConfig& config = {});

/// Gradient ascent along the chart gradient, with a fixed (feasibility-
/// shrunk) step or a line search per iterate.
RunRecord run_gradient_ascent(const Objective& objective, const FlatVector& init, StepMode step,
                              const OptimizerConfig& config = {});

/// Polak-Ribiere conjugate gradient with periodic restarts.
RunRecord run_cg(const Objective& objective, const FlatVector& init,
                 const OptimizerConfig& config = {});

/// Conjugate directions built from EM steps: d0 is the EM direction and
/// beta = -u'.(r' - r) / d.(r' - r), with a restart to the EM direction
/// every period and whenever the denominator degenerates.
RunRecord run_cg_em(const Objective& objective, const FlatVector& init,
                    const OptimizerConfig& config = {});

/// Over-relaxed EM: theta' = theta + gamma (EM(theta) - theta), with
/// gamma fixed or chosen by line search. gamma = 1 reproduces run_em
/// exactly.
RunRecord run_pem(const Objective& objective, const FlatVector& init, StepMode step,
                  const OptimizerConfig& config = {});

/// EM until the objective gain per iterate drops under the closeness
/// threshold, then the accelerator until it converges or fails, falling
/// back to EM on failure. More than max_consecutive_fallbacks
/// acceleration attempts in a row that accept nothing terminate the run
/// as FlatRegion.
RunRecord run_hybrid(const Objective& objective, const FlatVector& init, Method accelerator,
                     const OptimizerConfig& config = {});

/// One fitting run on a dataset: builds the objective (chart, priors,
/// remedies, pruning), dispatches the requested method — accelerators
/// run under the hybrid driver when `hybrid` is set — and restarts
/// after component pruning with the budget and trace carried over.
struct FitOptions {
  Method method = Method::Em;
  bool hybrid = true;
  Chart chart = Chart::Natural;
  double gamma = 1.5;
  ObjectiveSpec objective = ObjectiveSpec::ml();
  StoppingRule stop;
  long max_iters = 50000;
  long restart_period = 0;
  LineSearchConfig line_search;
  double closeness = 0.5;
  double variance_floor_rel = 1e-6;
  bool prune = false;
};

RunRecord fit(const Dataset& data, const GmmParams& init, const FitOptions& options);

/// FNV-1a over the natural-chart flattening; identifies an initial
/// point so the paired benchmark design can be audited after the fact.
std::uint64_t params_digest(const GmmParams& params);

}  // namespace mixem
