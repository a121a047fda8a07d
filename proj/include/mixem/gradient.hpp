#pragma once

#include <functional>

#include "mixem/em.hpp"
#include "mixem/types.hpp"

namespace mixem {

/// Ascent gradient of the objective in flat layout, computed from the
/// sufficient statistics of an E-step at `params` — no further data
/// pass. Layout matches flatten(params, chart):
///  - weights block: d/d alpha_j = N_j / alpha_j in the natural chart
///    (plus the Dirichlet term under MAP), pushed through the softmax
///    chain rule in the omega chart;
///  - mean blocks: Sigma_j^{-1} (S1_j - N_j mu_j);
///  - covariance blocks: packed lower triangle of
///    1/2 Sigma^{-1} (C_j - N_j Sigma) Sigma^{-1} with off-diagonal
///    entries doubled so that dot(gradient, direction) is the
///    directional derivative of the packed parameterization;
///    per-dimension (C_jp - N_j v_jp) / (2 v_jp^2) in diagonal mode,
///    where C_j is the second moment about the current mean.
/// The natural-chart weights block is returned raw; optimizers that
/// move in the simplex project it with project_alpha_gradient.
FlatVector gradient_from_em(const GmmParams& params, const EStepResult& stats, Chart chart,
                            const ObjectiveSpec& objective = ObjectiveSpec::ml());

/// Projection of a weights-block gradient onto the simplex tangent
/// space {sum of coordinates = 0}: g - mean(g).
Vector project_alpha_gradient(const Vector& g);

/// Central-difference gradient probe for cross-checks. `objective`
/// must return a finite value at every probe point; a non-finite value
/// raises a numeric error naming the offending coordinate.
FlatVector finite_difference_gradient(const std::function<double(const FlatVector&)>& objective,
                                      const FlatVector& at, double step);

}  // namespace mixem
