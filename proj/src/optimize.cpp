#include "mixem/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <limits>
#include <sstream>
#include <utility>

#include <Eigen/Cholesky>

namespace mixem {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

void IterationLedger::start(double initial_value) {
  objective_trace.clear();
  objective_trace.push_back(initial_value);
  em_equivalent_count = 0;
}

void IterationLedger::charge(double value) {
  ++em_equivalent_count;
  objective_trace.push_back(value);
}

void IterationLedger::note(std::string tag, std::string detail) {
  events.push_back({em_equivalent_count, std::move(tag), std::move(detail)});
}

bool should_stop(const std::vector<double>& accepted, const StoppingRule& rule) {
  const auto n = accepted.size();
  if (n < 2) return false;
  const double last = accepted[n - 1];
  const double change = std::abs(last - accepted[n - 2]);
  if (rule.kind == StoppingRule::Kind::Scaled) {
    return change < rule.threshold * (1.0 + std::abs(last));
  }
  return change < rule.threshold;
}

double step_shrink_to_feasible(const std::function<bool(const FlatVector&)>& feasible,
                               const FlatVector& theta, const FlatVector& dir, double gamma0) {
  if (!(gamma0 > 0.0) || !std::isfinite(gamma0)) {
    throw ConstraintError("step shrink needs a positive starting step");
  }
  FlatVector probe;
  probe.chart = theta.chart;
  double gamma = gamma0;
  for (int k = 0; k <= 60; ++k) {
    probe.values = theta.values + gamma * dir.values;
    if (feasible(probe)) return gamma;
    gamma /= 2.0;
  }
  throw ZeroStepError("step shrank through sixty halvings without reaching feasibility");
}

LineSearchResult line_search_secant(const Objective& objective, const FlatVector& theta,
                                    const Evaluation& at_theta, const FlatVector& dir,
                                    const LineSearchConfig& config, IterationLedger& ledger) {
  LineSearchResult res;
  const double dd0 = at_theta.gradient.values.dot(dir.values);
  if (!std::isfinite(dd0) || !(dd0 > 0.0)) return res;  // not an ascent direction
  const double phi0 = at_theta.value;
  const auto feasible = [&objective](const FlatVector& p) { return objective.feasible(p); };

  double g_prev = 0.0;
  double dd_prev = dd0;
  double g_cur;
  try {
    g_cur = step_shrink_to_feasible(feasible, theta, dir, config.initial_step);
  } catch (const ZeroStepError&) {
    return res;
  }

  bool have_best = false;
  double best_value = phi0;
  LineSearchResult best;

  FlatVector probe;
  probe.chart = theta.chart;
  for (int trial = 0; trial < config.max_trials; ++trial) {
    probe.values = theta.values + g_cur * dir.values;
    Evaluation e = objective.evaluate(probe);
    ledger.charge(e.value);
    ++res.evals_charged;

    const bool finite = std::isfinite(e.value);
    const double dd_cur = finite ? e.gradient.values.dot(dir.values) : kNan;
    // A trial counts only when it clears the progress floor; merely
    // improving trials below it are stall steps the stopping rule
    // would mistake for convergence.
    const bool counting = finite && e.value - phi0 > config.min_gain;

    if (counting && e.value > best_value) {
      have_best = true;
      best_value = e.value;
      best.gamma = g_cur;
      best.point = probe;
      best.eval = e;
    }
    if (counting && std::isfinite(dd_cur) &&
        std::abs(dd_cur) <= config.curvature_tol * std::abs(dd0)) {
      res.success = true;
      res.gamma = g_cur;
      res.point = std::move(probe);
      res.eval = std::move(e);
      return res;
    }
    if (trial + 1 >= config.max_trials) break;

    double g_next = kNan;
    if (std::isfinite(dd_cur) && dd_cur != dd_prev) {
      g_next = g_cur - dd_cur * (g_cur - g_prev) / (dd_cur - dd_prev);
    }
    if (!std::isfinite(g_next) || !(g_next > 0.0)) {
      // Secant step unusable: expand while still climbing, bisect otherwise.
      g_next = (std::isfinite(dd_cur) && dd_cur > 0.0) ? 2.0 * g_cur : 0.5 * g_cur;
    }
    g_next = std::min(g_next, 1e12 * std::max(1.0, g_cur));
    if (std::isfinite(dd_cur)) {
      g_prev = g_cur;
      dd_prev = dd_cur;
    }
    try {
      g_cur = step_shrink_to_feasible(feasible, theta, dir, g_next);
    } catch (const ZeroStepError&) {
      break;
    }
  }

  if (have_best) {
    // No trial flattened the derivative, but the best one cleared the
    // progress floor — along a ridge the root can sit beyond every
    // probe while the gains are real, so the step is taken anyway.
    best.success = true;
    best.evals_charged = res.evals_charged;
    return best;
  }
  return res;
}

// ---------------------------------------------------------------------------
// GmmObjective

GmmObjective::GmmObjective(const Dataset& data, FlatLayout layout, ObjectiveSpec spec, Chart chart,
                           double variance_floor_rel, bool prune)
    : data_(data), layout_(layout), spec_(std::move(spec)), chart_(chart), prune_(prune) {
  if (data.dim() != layout.dim) throw ConstraintError("dataset dimension does not match layout");
  if (spec_.is_map()) {
    require_valid(spec_.priors, layout.components, layout.dim);
    if (layout.mode != CovMode::Diagonal) {
      throw ConstraintError("MAP objective is defined for diagonal covariances only");
    }
  }
  const long n = data.size();
  variance_floor_ = Vector::Zero(layout.dim);
  if (variance_floor_rel > 0.0 && n > 1) {
    for (int p = 0; p < layout.dim; ++p) {
      const double mean = data.points.col(p).mean();
      const double second = data.points.col(p).squaredNorm() / static_cast<double>(n);
      variance_floor_[p] = variance_floor_rel * std::max(second - mean * mean, 1e-300);
    }
  }
}

GmmParams GmmObjective::params_at(const FlatVector& theta) const {
  return unflatten(theta, layout_);
}

Evaluation GmmObjective::evaluate(const FlatVector& theta) const {
  const GmmParams params = unflatten(theta, layout_);
  const EStepResult stats = e_step(params, data_, spec_);

  Evaluation ev;
  ev.value = stats.objective;
  ev.gradient = gradient_from_em(params, stats, chart_, spec_);
  if (chart_ == Chart::Natural) {
    const Vector raw = ev.gradient.values.head(layout_.components);
    ev.gradient.values.head(layout_.components) = project_alpha_gradient(raw);
  }

  try {
    ev.em_point = flatten(em_update(stats, data_.size(), spec_), chart_);
    ev.has_em = true;
  } catch (const NearSingularError& e) {
    if (!spec_.is_map() && variance_floor_.maxCoeff() > 0.0) {
      try {
        ev.em_point = flatten(m_step(stats, data_.size(), &variance_floor_), chart_);
        ev.has_em = true;
        ev.note = std::string("variance floor applied: ") + e.what();
      } catch (const Error& inner) {
        ev.note = inner.what();
      }
    } else {
      ev.note = e.what();
    }
  } catch (const EmptyComponentError& e) {
    ev.note = e.what();
  }
  return ev;
}

bool GmmObjective::feasible(const FlatVector& theta) const {
  if (theta.values.size() != layout_.total() || theta.chart != chart_) return false;
  if (!theta.values.allFinite()) return false;

  const int m = layout_.components;
  if (chart_ == Chart::Natural) {
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      const double a = theta.values[j];
      if (!(a > 0.0)) return false;
      sum += a;
    }
    // Probes drift off the simplex by accumulated roundoff; accepted
    // iterates are snapped back, so a loose gate is enough here.
    if (std::abs(sum - 1.0) > 1e-6) return false;
  }

  GmmParams p;
  try {
    p = unflatten(theta, layout_);
  } catch (const Error&) {
    return false;
  }

  for (int j = 0; j < m; ++j) {
    if (spec_.is_map()) {
      for (int d = 0; d < layout_.dim; ++d) {
        if (p.means[j][d] < spec_.priors.box_lower[d] || p.means[j][d] > spec_.priors.box_upper[d]) {
          return false;
        }
      }
    }
    if (layout_.mode == CovMode::Diagonal) {
      if (!(p.variances[j].array() > 0.0).all()) return false;
    } else {
      Eigen::LLT<Matrix> llt(p.covariances[j]);
      if (llt.info() != Eigen::Success) return false;
      for (int i = 0; i < layout_.dim; ++i) {
        if (!(llt.matrixLLT()(i, i) > 0.0)) return false;
      }
    }
  }
  return true;
}

FlatVector GmmObjective::snap(const FlatVector& theta) const {
  FlatVector out = theta;
  const int m = layout_.components;
  if (chart_ == Chart::Natural) {
    const double sum = out.values.head(m).sum();
    if (sum > 0.0 && std::isfinite(sum)) out.values.head(m) /= sum;
  } else {
    out.values.head(m).array() -= out.values.head(m).mean();
  }
  return out;
}

bool GmmObjective::iterate_valid(const FlatVector& theta) const {
  GmmParams p;
  try {
    p = unflatten(theta, layout_);
  } catch (const Error&) {
    return false;
  }
  if (!validate(p).all_ok()) return false;
  if (spec_.is_map()) {
    for (int j = 0; j < layout_.components; ++j) {
      for (int d = 0; d < layout_.dim; ++d) {
        if (p.means[j][d] < spec_.priors.box_lower[d] || p.means[j][d] > spec_.priors.box_upper[d]) {
          return false;
        }
      }
    }
  }
  return true;
}

bool GmmObjective::wants_restart(const FlatVector& theta) const {
  if (!prune_) return false;
  GmmParams p;
  try {
    p = unflatten(theta, layout_);
  } catch (const Error&) {
    return false;
  }
  const double weight_floor = 1.0 / static_cast<double>(data_.size());
  for (int j = 0; j < layout_.components; ++j) {
    if (p.weights[j] < weight_floor) return true;
    if (layout_.mode == CovMode::Diagonal) {
      if ((p.variances[j].array() < kPruneVarianceThreshold).any()) return true;
    } else if ((p.covariances[j].diagonal().array() < kPruneVarianceThreshold).any()) {
      return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Names

std::string method_name(Method m) {
  switch (m) {
    case Method::Em: return "em";
    case Method::GaFixed: return "ga-fixed";
    case Method::GaOpt: return "ga-opt";
    case Method::Cg: return "cg";
    case Method::CgEm: return "cg-em";
    case Method::CgEmRp: return "cg-em-rp";
    case Method::PemFixed: return "pem-fixed";
    case Method::PemOpt: return "pem-opt";
  }
  throw ConstraintError("unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "em") return Method::Em;
  if (name == "ga-fixed") return Method::GaFixed;
  if (name == "ga-opt") return Method::GaOpt;
  if (name == "cg") return Method::Cg;
  if (name == "cg-em") return Method::CgEm;
  if (name == "cg-em-rp") return Method::CgEmRp;
  if (name == "pem-fixed") return Method::PemFixed;
  if (name == "pem-opt") return Method::PemOpt;
  throw ConstraintError("unknown method name: " + name);
}

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIters: return "max-iters";
    case Termination::LineSearchDead: return "line-search-dead";
    case Termination::FlatRegion: return "flat-region";
    case Termination::PruneRequested: return "prune-requested";
    case Termination::Failed: return "failed";
  }
  throw ConstraintError("unknown termination");
}

Termination termination_from_name(const std::string& name) {
  if (name == "converged") return Termination::Converged;
  if (name == "max-iters") return Termination::MaxIters;
  if (name == "line-search-dead") return Termination::LineSearchDead;
  if (name == "flat-region") return Termination::FlatRegion;
  if (name == "prune-requested") return Termination::PruneRequested;
  if (name == "failed") return Termination::Failed;
  throw ConstraintError("unknown termination name: " + name);
}

// ---------------------------------------------------------------------------
// Drivers

namespace {

struct Driver {
  Driver(const Objective& obj, const OptimizerConfig& cfg, RunRecord& rec)
      : obj(obj), cfg(cfg), rec(rec) {}

  const Objective& obj;
  const OptimizerConfig& cfg;
  RunRecord& rec;

  FlatVector theta;
  Evaluation cur;
  std::vector<double> window;  // accepted values the stopping rule sees

  bool budget_left() const { return rec.ledger.em_equivalent_count < cfg.max_iters; }

  Evaluation eval_charged(const FlatVector& p) {
    Evaluation e = obj.evaluate(p);
    rec.ledger.charge(e.value);
    if (!e.note.empty()) rec.ledger.note("em-update", e.note);
    return e;
  }

  void record_position() {
    rec.final_theta = theta;
    rec.final_objective = cur.value;
    rec.final_gradient_norm = cur.gradient.values.size() > 0 ? cur.gradient.values.norm() : -1.0;
  }

  void begin(const FlatVector& init) {
    theta = init;
    if (rec.ledger.objective_trace.empty()) {
      cur = obj.evaluate(theta);
      rec.ledger.start(cur.value);
      rec.ledger.note("initial-eval");
      if (!cur.note.empty()) rec.ledger.note("em-update", cur.note);
    } else {
      // Continuation after pruning: the rebuilt objective has to be
      // measured at the new point, and that pass costs a unit like any other.
      cur = eval_charged(theta);
    }
    if (!std::isfinite(cur.value)) {
      throw NumericError("objective is not finite at the starting point", -1);
    }
    rec.accepted_objectives.push_back(cur.value);
    window.push_back(cur.value);
    record_position();
  }

  // Books an accepted iterate; returns true when the caller must stop
  // for a prune-restart.
  bool accept(FlatVector point, Evaluation e, bool snap) {
    if (!std::isfinite(e.value)) {
      throw NumericError("accepted iterate has a non-finite objective", -1);
    }
    theta = snap ? obj.snap(std::move(point)) : std::move(point);
    cur = std::move(e);
    rec.accepted_objectives.push_back(cur.value);
    window.push_back(cur.value);
    if (!obj.iterate_valid(theta)) rec.invalid_iterate_seen = true;
    record_position();
    return obj.wants_restart(theta);
  }

  void reset_window() {
    window.clear();
    window.push_back(cur.value);
  }

  // Line search configuration for a search leaving the current iterate:
  // the progress floor tracks the stopping rule so that an accepted
  // step is always distinguishable from convergence under that rule.
  LineSearchConfig search_config() const {
    LineSearchConfig ls = cfg.line_search;
    const double floor = cfg.stop.kind == StoppingRule::Kind::Scaled
                             ? cfg.stop.threshold * (1.0 + std::abs(cur.value))
                             : cfg.stop.threshold;
    ls.min_gain = std::max(ls.min_gain, floor);
    return ls;
  }

  bool stop_now() const { return should_stop(window, cfg.stop); }

  void fail(const std::string& why) {
    rec.termination = Termination::Failed;
    rec.diagnostics = why;
  }

  // --- plain EM ---------------------------------------------------------
  void em_loop() {
    while (budget_left()) {
      if (!cur.has_em) {
        fail(cur.note.empty() ? "objective provides no EM update" : cur.note);
        return;
      }
      FlatVector point = cur.em_point;
      Evaluation next = eval_charged(point);
      if (accept(std::move(point), std::move(next), /*snap=*/false)) {
        rec.termination = Termination::PruneRequested;
        return;
      }
      if (stop_now()) {
        rec.termination = Termination::Converged;
        return;
      }
    }
    rec.termination = Termination::MaxIters;
  }

  // --- gradient ascent ---------------------------------------------------
  void ga_loop(StepMode step) {
    while (budget_left()) {
      const FlatVector& d = cur.gradient;
      if (step == StepMode::Fixed) {
        double gamma;
        try {
          gamma = step_shrink_to_feasible([this](const FlatVector& p) { return obj.feasible(p); },
                                          theta, d, cfg.gamma);
        } catch (const ZeroStepError& e) {
          fail(e.what());
          return;
        }
        if (gamma != cfg.gamma) rec.ledger.note("step-shrunk");
        FlatVector point;
        point.chart = theta.chart;
        point.values = theta.values + gamma * d.values;
        Evaluation next = eval_charged(point);
        if (accept(std::move(point), std::move(next), /*snap=*/true)) {
          rec.termination = Termination::PruneRequested;
          return;
        }
      } else {
        LineSearchResult ls = line_search_secant(obj, theta, cur, d, search_config(), rec.ledger);
        if (!ls.success) {
          rec.ledger.note("line-search-fail", "gradient direction");
          rec.termination = Termination::LineSearchDead;
          return;
        }
        if (accept(std::move(ls.point), std::move(ls.eval), /*snap=*/true)) {
          rec.termination = Termination::PruneRequested;
          return;
        }
      }
      if (stop_now()) {
        rec.termination = Termination::Converged;
        return;
      }
    }
    rec.termination = Termination::MaxIters;
  }

  // --- conjugate gradients -----------------------------------------------
  // em_directions: build conjugate directions from EM steps instead of
  // gradients (d0 = EM direction, beta from the EM direction identity).
  void cg_loop(bool em_directions) {
    const long period = cfg.restart_period > 0 ? cfg.restart_period : obj.size();

    Vector r = cur.gradient.values;
    FlatVector d;
    d.chart = theta.chart;
    if (em_directions) {
      if (!cur.has_em) {
        fail(cur.note.empty() ? "objective provides no EM update" : cur.note);
        return;
      }
      d.values = cur.em_point.values - theta.values;
    } else {
      d.values = r;
    }
    long since_restart = 0;
    bool restarted_this_iterate = false;

    while (budget_left()) {
      LineSearchResult ls = line_search_secant(obj, theta, cur, d, search_config(), rec.ledger);
      if (!ls.success) {
        if (restarted_this_iterate) {
          rec.ledger.note("line-search-fail", "after restart");
          rec.termination = Termination::LineSearchDead;
          return;
        }
        restarted_this_iterate = true;
        since_restart = 0;
        rec.ledger.note("cg-restart", "line-search failure");
        if (em_directions) {
          if (!cur.has_em) {
            fail("objective provides no EM update");
            return;
          }
          d.values = cur.em_point.values - theta.values;
        } else {
          d.values = cur.gradient.values;
        }
        continue;
      }
      restarted_this_iterate = false;

      const Vector r_new = ls.eval.gradient.values;
      if (accept(std::move(ls.point), std::move(ls.eval), /*snap=*/true)) {
        rec.termination = Termination::PruneRequested;
        return;
      }
      if (stop_now()) {
        rec.termination = Termination::Converged;
        return;
      }

      ++since_restart;
      double beta = 0.0;
      if (since_restart >= period) {
        since_restart = 0;
        rec.ledger.note("cg-restart", "period");
      } else if (em_directions) {
        const double denom = d.values.dot(r_new - r);
        if (std::abs(denom) < 1e-300) {
          rec.ledger.note("cg-restart", "degenerate curvature denominator");
        } else {
          beta = -(cur.em_point.values - theta.values).dot(r_new - r) / denom;
        }
      } else {
        // Polak-Ribiere with the usual nonnegativity clamp: a negative
        // beta signals lost conjugacy and degrades to steepest ascent.
        const double rr = r.dot(r);
        if (rr > 0.0) beta = std::max(0.0, r_new.dot(r_new - r) / rr);
      }

      if (em_directions) {
        if (!cur.has_em) {
          fail(cur.note.empty() ? "objective provides no EM update" : cur.note);
          return;
        }
        d.values = (cur.em_point.values - theta.values) + beta * d.values;
      } else {
        d.values = r_new + beta * d.values;
      }
      r = r_new;
    }
    rec.termination = Termination::MaxIters;
  }

  // --- over-relaxed EM ----------------------------------------------------
  void pem_loop(StepMode step) {
    while (budget_left()) {
      if (!cur.has_em) {
        fail(cur.note.empty() ? "objective provides no EM update" : cur.note);
        return;
      }
      if (step == StepMode::Fixed) {
        bool prune;
        if (cfg.gamma == 1.0) {
          // Exactly the EM update, bit for bit.
          FlatVector point = cur.em_point;
          Evaluation next = eval_charged(point);
          prune = accept(std::move(point), std::move(next), /*snap=*/false);
        } else {
          FlatVector u;
          u.chart = theta.chart;
          u.values = cur.em_point.values - theta.values;
          double gamma;
          try {
            gamma = step_shrink_to_feasible(
                [this](const FlatVector& p) { return obj.feasible(p); }, theta, u, cfg.gamma);
          } catch (const ZeroStepError& e) {
            fail(e.what());
            return;
          }
          if (gamma != cfg.gamma) rec.ledger.note("step-shrunk");
          FlatVector point;
          point.chart = theta.chart;
          point.values = theta.values + gamma * u.values;
          Evaluation next = eval_charged(point);
          prune = accept(std::move(point), std::move(next), /*snap=*/true);
        }
        if (prune) {
          rec.termination = Termination::PruneRequested;
          return;
        }
      } else {
        FlatVector u;
        u.chart = theta.chart;
        u.values = cur.em_point.values - theta.values;
        LineSearchResult ls = line_search_secant(obj, theta, cur, u, search_config(), rec.ledger);
        bool prune;
        if (ls.success) {
          prune = accept(std::move(ls.point), std::move(ls.eval), /*snap=*/true);
        } else {
          // The relaxation found nothing better; the plain EM step still
          // makes progress, so take it.
          rec.ledger.note("line-search-fail", "taking the plain EM step");
          FlatVector point = cur.em_point;
          Evaluation next = eval_charged(point);
          prune = accept(std::move(point), std::move(next), /*snap=*/false);
        }
        if (prune) {
          rec.termination = Termination::PruneRequested;
          return;
        }
      }
      if (stop_now()) {
        rec.termination = Termination::Converged;
        return;
      }
    }
    rec.termination = Termination::MaxIters;
  }

  // --- hybrid: EM until close, accelerate, fall back ----------------------
  void hybrid_loop(Method accel) {
    long immediate_fallbacks = 0;

    while (budget_left()) {
      // EM phase.
      reset_window();
      bool accelerate = false;
      while (budget_left()) {
        if (!cur.has_em) {
          fail(cur.note.empty() ? "objective provides no EM update" : cur.note);
          return;
        }
        FlatVector point = cur.em_point;
        Evaluation next = eval_charged(point);
        if (accept(std::move(point), std::move(next), /*snap=*/false)) {
          rec.termination = Termination::PruneRequested;
          return;
        }
        if (stop_now()) {
          rec.termination = Termination::Converged;
          return;
        }
        const double gain = window[window.size() - 1] - window[window.size() - 2];
        if (gain < cfg.closeness_threshold) {
          rec.ledger.note("acceleration-start", method_name(accel));
          accelerate = true;
          break;
        }
      }
      if (!accelerate) break;  // ran out of budget during the EM phase

      // Acceleration phase.
      reset_window();
      long accepted_here = 0;
      const long period = cfg.restart_period > 0 ? cfg.restart_period : obj.size();
      Vector r = cur.gradient.values;
      FlatVector d;
      d.chart = theta.chart;
      const bool cg_kind = accel == Method::Cg || accel == Method::CgEm || accel == Method::CgEmRp;
      const bool em_directions = accel == Method::CgEm || accel == Method::CgEmRp;
      if (cg_kind) d.values = em_directions ? (cur.em_point.values - theta.values) : r;
      long since_restart = 0;
      bool restarted_this_iterate = false;
      bool fallback = false;
      std::string fallback_reason;

      while (budget_left() && !fallback) {
        switch (accel) {
          case Method::PemFixed: {
            if (!cur.has_em) {
              fail(cur.note.empty() ? "objective provides no EM update" : cur.note);
              return;
            }
            FlatVector point;
            Evaluation next;
            bool plain_em = cfg.gamma == 1.0;
            if (plain_em) {
              point = cur.em_point;
              next = eval_charged(point);
            } else {
              FlatVector u;
              u.chart = theta.chart;
              u.values = cur.em_point.values - theta.values;
              double gamma;
              try {
                gamma = step_shrink_to_feasible(
                    [this](const FlatVector& p) { return obj.feasible(p); }, theta, u, cfg.gamma);
              } catch (const ZeroStepError&) {
                fallback = true;
                fallback_reason = "relaxed step infeasible";
                break;
              }
              point.chart = theta.chart;
              point.values = theta.values + gamma * u.values;
              next = eval_charged(point);
            }
            if (next.value < cur.value) {
              fallback = true;
              fallback_reason = "objective decreased";
              break;
            }
            if (accept(std::move(point), std::move(next), /*snap=*/!plain_em)) {
              rec.termination = Termination::PruneRequested;
              return;
            }
            ++accepted_here;
            break;
          }
          case Method::GaFixed: {
            double gamma;
            try {
              gamma = step_shrink_to_feasible(
                  [this](const FlatVector& p) { return obj.feasible(p); }, theta, cur.gradient,
                  cfg.gamma);
            } catch (const ZeroStepError&) {
              fallback = true;
              fallback_reason = "gradient step infeasible";
              break;
            }
            FlatVector point;
            point.chart = theta.chart;
            point.values = theta.values + gamma * cur.gradient.values;
            Evaluation next = eval_charged(point);
            if (next.value < cur.value) {
              fallback = true;
              fallback_reason = "objective decreased";
              break;
            }
            if (accept(std::move(point), std::move(next), /*snap=*/true)) {
              rec.termination = Termination::PruneRequested;
              return;
            }
            ++accepted_here;
            break;
          }
          case Method::PemOpt:
          case Method::GaOpt: {
            FlatVector dir;
            dir.chart = theta.chart;
            if (accel == Method::PemOpt) {
              if (!cur.has_em) {
                fail(cur.note.empty() ? "objective provides no EM update" : cur.note);
                return;
              }
              dir.values = cur.em_point.values - theta.values;
            } else {
              dir.values = cur.gradient.values;
            }
            LineSearchResult ls =
                line_search_secant(obj, theta, cur, dir, search_config(), rec.ledger);
            if (!ls.success) {
              fallback = true;
              fallback_reason = "line search failed";
              break;
            }
            if (accept(std::move(ls.point), std::move(ls.eval), /*snap=*/true)) {
              rec.termination = Termination::PruneRequested;
              return;
            }
            ++accepted_here;
            break;
          }
          case Method::Cg:
          case Method::CgEm:
          case Method::CgEmRp: {
            LineSearchResult ls = line_search_secant(obj, theta, cur, d, search_config(), rec.ledger);
            if (!ls.success) {
              if (restarted_this_iterate) {
                fallback = true;
                fallback_reason = "line search failed after restart";
                break;
              }
              restarted_this_iterate = true;
              since_restart = 0;
              rec.ledger.note("cg-restart", "line-search failure");
              if (em_directions) {
                if (!cur.has_em) {
                  fail("objective provides no EM update");
                  return;
                }
                d.values = cur.em_point.values - theta.values;
              } else {
                d.values = cur.gradient.values;
              }
              break;  // retry with the restarted direction
            }
            restarted_this_iterate = false;
            const Vector r_new = ls.eval.gradient.values;
            if (accept(std::move(ls.point), std::move(ls.eval), /*snap=*/true)) {
              rec.termination = Termination::PruneRequested;
              return;
            }
            ++accepted_here;
            ++since_restart;
            double beta = 0.0;
            if (since_restart >= period) {
              since_restart = 0;
              rec.ledger.note("cg-restart", "period");
            } else if (em_directions) {
              const double denom = d.values.dot(r_new - r);
              if (std::abs(denom) < 1e-300) {
                rec.ledger.note("cg-restart", "degenerate curvature denominator");
              } else {
                beta = -(cur.em_point.values - theta.values).dot(r_new - r) / denom;
              }
            } else {
              const double rr = r.dot(r);
              if (rr > 0.0) beta = r_new.dot(r_new - r) / rr;
            }
            if (em_directions) {
              if (!cur.has_em) {
                fail(cur.note.empty() ? "objective provides no EM update" : cur.note);
                return;
              }
              d.values = (cur.em_point.values - theta.values) + beta * d.values;
            } else {
              d.values = r_new + beta * d.values;
            }
            r = r_new;
            break;
          }
          default:
            throw ConstraintError("method cannot serve as a hybrid accelerator");
        }

        if (!fallback && !restarted_this_iterate && stop_now()) {
          rec.termination = Termination::Converged;
          return;
        }
      }

      if (fallback) {
        rec.ledger.note("fallback-to-em", fallback_reason);
        if (accepted_here == 0) {
          ++immediate_fallbacks;
          if (immediate_fallbacks > cfg.max_consecutive_fallbacks) {
            rec.termination = Termination::FlatRegion;
            rec.diagnostics = "acceleration kept failing without progress; the region is flat";
            return;
          }
        } else {
          immediate_fallbacks = 0;
        }
      }
    }
    rec.termination = Termination::MaxIters;
  }
};

RunRecord make_record(const std::string& method) {
  RunRecord rec;
  rec.method = method;
  return rec;
}

template <typename Loop>
void drive(const Objective& obj, const FlatVector& init, const OptimizerConfig& cfg,
           RunRecord& rec, Loop&& loop) {
  Driver drv{obj, cfg, rec};
  try {
    drv.begin(init);
    loop(drv);
  } catch (const Error& e) {
    rec.termination = Termination::Failed;
    rec.diagnostics = e.what();
  }
}

}  // namespace

RunRecord run_em(const Objective& objective, const FlatVector& init, const OptimizerConfig& config) {
  RunRecord rec = make_record("em");
  drive(objective, init, config, rec, [](Driver& d) { d.em_loop(); });
  return rec;
}

RunRecord run_gradient_ascent(const Objective& objective, const FlatVector& init, StepMode step,
                              const OptimizerConfig& config) {
  RunRecord rec = make_record(step == StepMode::Fixed ? "ga-fixed" : "ga-opt");
  drive(objective, init, config, rec, [step](Driver& d) { d.ga_loop(step); });
  return rec;
}

RunRecord run_cg(const Objective& objective, const FlatVector& init, const OptimizerConfig& config) {
  RunRecord rec = make_record("cg");
  drive(objective, init, config, rec, [](Driver& d) { d.cg_loop(false); });
  return rec;
}

RunRecord run_cg_em(const Objective& objective, const FlatVector& init,
                    const OptimizerConfig& config) {
  RunRecord rec = make_record("cg-em");
  drive(objective, init, config, rec, [](Driver& d) { d.cg_loop(true); });
  return rec;
}

RunRecord run_pem(const Objective& objective, const FlatVector& init, StepMode step,
                  const OptimizerConfig& config) {
  RunRecord rec = make_record(step == StepMode::Fixed ? "pem-fixed" : "pem-opt");
  drive(objective, init, config, rec, [step](Driver& d) { d.pem_loop(step); });
  return rec;
}

RunRecord run_hybrid(const Objective& objective, const FlatVector& init, Method accelerator,
                     const OptimizerConfig& config) {
  if (accelerator == Method::Em) {
    throw ConstraintError("the hybrid accelerator must be a non-EM method");
  }
  RunRecord rec = make_record("hybrid-" + method_name(accelerator));
  drive(objective, init, config, rec, [accelerator](Driver& d) { d.hybrid_loop(accelerator); });
  return rec;
}

// ---------------------------------------------------------------------------
// fit

namespace {

std::string describe(const FitOptions& o) {
  std::ostringstream ss;
  ss << std::setprecision(12);
  ss << "method=" << method_name(o.method);
  if (o.method != Method::Em) ss << " hybrid=" << (o.hybrid ? 1 : 0);
  ss << " chart=" << (o.method == Method::CgEmRp || o.chart == Chart::Omega ? "omega" : "natural");
  ss << " objective=" << (o.objective.is_map() ? "map" : "ml");
  if (o.method == Method::GaFixed || o.method == Method::PemFixed) ss << " gamma=" << o.gamma;
  ss << " stop=" << (o.stop.kind == StoppingRule::Kind::Scaled ? "scaled" : "absolute") << ":"
     << o.stop.threshold;
  ss << " max-iters=" << o.max_iters;
  if (o.prune) ss << " prune=1";
  return ss.str();
}

}  // namespace

std::uint64_t params_digest(const GmmParams& params) {
  const FlatVector flat = flatten(params, Chart::Natural);
  const auto* bytes = reinterpret_cast<const unsigned char*>(flat.values.data());
  const std::size_t n = sizeof(double) * static_cast<std::size_t>(flat.values.size());
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

RunRecord fit(const Dataset& data, const GmmParams& init, const FitOptions& options) {
  const bool hybrid = options.hybrid && options.method != Method::Em;
  RunRecord rec;
  rec.method = (hybrid ? "hybrid-" : "") + method_name(options.method);
  rec.config = describe(options);
  rec.init_digest = params_digest(init);

  const Chart chart = options.method == Method::CgEmRp ? Chart::Omega : options.chart;

  OptimizerConfig cfg;
  cfg.stop = options.stop;
  cfg.max_iters = options.max_iters;
  cfg.gamma = options.gamma;
  cfg.restart_period = options.restart_period;
  cfg.line_search = options.line_search;
  cfg.closeness_threshold = options.closeness;

  GmmParams params = init;
  ObjectiveSpec spec = options.objective;
  const int max_rounds = init.components() + 1;

  try {
    for (int round = 0; round < max_rounds; ++round) {
      const FlatLayout layout = layout_of(params);
      GmmObjective obj(data, layout, spec, chart, options.variance_floor_rel, options.prune);
      const FlatVector start = flatten(params, chart);

      Driver drv{obj, cfg, rec};
      drv.begin(start);
      switch (options.method) {
        case Method::Em:
          drv.em_loop();
          break;
        case Method::GaFixed:
          options.hybrid ? drv.hybrid_loop(Method::GaFixed) : drv.ga_loop(StepMode::Fixed);
          break;
        case Method::GaOpt:
          options.hybrid ? drv.hybrid_loop(Method::GaOpt) : drv.ga_loop(StepMode::Optimized);
          break;
        case Method::Cg:
          options.hybrid ? drv.hybrid_loop(Method::Cg) : drv.cg_loop(false);
          break;
        case Method::CgEm:
        case Method::CgEmRp:
          options.hybrid ? drv.hybrid_loop(options.method) : drv.cg_loop(true);
          break;
        case Method::PemFixed:
          options.hybrid ? drv.hybrid_loop(Method::PemFixed) : drv.pem_loop(StepMode::Fixed);
          break;
        case Method::PemOpt:
          options.hybrid ? drv.hybrid_loop(Method::PemOpt) : drv.pem_loop(StepMode::Optimized);
          break;
      }

      if (rec.termination != Termination::PruneRequested) {
        rec.has_params = true;
        rec.final_params = obj.params_at(rec.final_theta);
        return rec;
      }

      const PruneResult pruned = prune_components(obj.params_at(rec.final_theta), data.size());
      std::ostringstream which;
      for (std::size_t i = 0; i < pruned.pruned.size(); ++i) {
        which << (i ? "," : "") << pruned.pruned[i];
      }
      rec.ledger.note("prune", "removed components " + which.str());
      rec.restart_boundaries.push_back(static_cast<long>(rec.accepted_objectives.size()));
      params = pruned.params;
      if (spec.is_map() && !pruned.pruned.empty()) {
        Vector counts(params.components());
        int keep = 0;
        std::size_t drop = 0;
        for (int j = 0; j < static_cast<int>(spec.priors.dirichlet_counts.size()); ++j) {
          if (drop < pruned.pruned.size() && pruned.pruned[drop] == j) {
            ++drop;
            continue;
          }
          counts[keep++] = spec.priors.dirichlet_counts[j];
        }
        spec.priors.dirichlet_counts = counts;
      }
    }
    rec.termination = Termination::Failed;
    rec.diagnostics = "pruning never stabilized";
  } catch (const Error& e) {
    rec.termination = Termination::Failed;
    rec.diagnostics = e.what();
  }
  return rec;
}

}  // namespace mixem
