#pragma once

#include "mixem/model.hpp"
#include "mixem/types.hpp"

namespace mixem {

/// Product of one shared data pass: responsibilities, expected
/// sufficient statistics, and the objective value at the evaluated
/// parameters. Everything the M-step, the EM direction and the
/// gradient need comes from this single pass; that fusion is the
/// EM-equivalent cost unit of the whole library.
struct EStepResult {
  CovMode mode = CovMode::Full;
  long n = 0;                   // number of points the pass covered
  Matrix responsibilities;      // N x M, rows sum to 1
  Vector counts;                // N_j = sum_i h_ij
  std::vector<Vector> s1;       // per component: sum_i h_ij x_i
  std::vector<Matrix> s2_full;  // Full mode: sum_i h_ij x_i x_i^T
  std::vector<Vector> s2_diag;  // Diagonal mode: sum_i h_ij x_i^2 per dimension
  double objective = 0.0;       // log-likelihood or log-posterior at the input params

  int components() const { return static_cast<int>(counts.size()); }
  int dim() const { return s1.empty() ? 0 : static_cast<int>(s1[0].size()); }
};

/// Responsibility mass below which a component counts as empty for the
/// ML M-step; below this the weighted moments are noise.
inline constexpr double kEmptyComponentThreshold = 1e-10;

/// Pruning thresholds of the MAP pipeline: a component goes when its
/// weight drops under 1/N or any of its variances under 1e-100.
inline constexpr double kPruneVarianceThreshold = 1e-100;

/// One pass over the data: h_ij proportional to alpha_j g(x_i|mu_j,sigma_j),
/// normalized per row through log-sum-exp, with sufficient statistics
/// and the objective accumulated in the same sweep (no second scan).
EStepResult e_step(const GmmParams& params, const Dataset& data,
                   const ObjectiveSpec& objective = ObjectiveSpec::ml());

/// Closed-form ML update from expected sufficient statistics.
/// Covariances are symmetrized as (A + A^T)/2 before return. Throws
/// EmptyComponentError when some N_j < 1e-10 and NearSingularError when
/// an updated covariance fails its positive-definiteness check.
/// `variance_floor` (per-dimension, absolute) is the singularity
/// remedy: diagonal entries are clamped to it before the check.
GmmParams m_step(const EStepResult& stats, long data_size,
                 const Vector* variance_floor = nullptr);

/// MAP update for diagonal mode: alpha_j = (N_j + c_j - 1)/(N + sum c - M),
/// means clipped to the prior box, and per-dimension variances
/// (N_j s^2 + df*scale)/(N_j + df + 2) with s^2 the ML variance. A
/// component with no responsibility mass falls back to the prior mode
/// (box center, variance df*scale/(df+2)); its weight stays positive
/// through the pseudo-counts. Throws EmptyComponentError if a weight
/// numerator N_j + c_j - 1 is not positive.
GmmParams m_step_map(const EStepResult& stats, long data_size, const Priors& priors);

/// flatten(EM update of `stats`, chart) - flatten(current, chart).
/// Uses m_step or m_step_map according to the objective.
FlatVector em_direction(const GmmParams& current, const EStepResult& stats, Chart chart,
                        const ObjectiveSpec& objective = ObjectiveSpec::ml());

struct PruneResult {
  GmmParams params;
  std::vector<int> pruned;  // removed component indices, ascending
};

/// Removes every component with alpha_j < 1/N or any variance below
/// 1e-100, renormalizing the surviving weights. Diagonal mode only.
/// Throws DegenerateModelError if nothing survives.
PruneResult prune_components(const GmmParams& params, long data_size);

/// EM update dispatch: m_step for ML, m_step_map for MAP.
GmmParams em_update(const EStepResult& stats, long data_size, const ObjectiveSpec& objective);

}  // namespace mixem
