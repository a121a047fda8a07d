#pragma once

#include "mixem/types.hpp"

namespace mixem {

/// Per-constraint validity report for a parameter set.
struct ValidationReport {
  bool shapes_ok = false;        // container sizes consistent with (M, d, mode)
  bool finite_ok = false;        // every stored number is finite
  bool weights_positive = false; // every alpha_j > 0
  double weight_sum = 0.0;
  bool simplex_ok = false;       // |sum(alpha) - 1| <= 1e-12
  std::vector<bool> component_pd;  // per component: Cholesky succeeds / variances > 0

  bool all_ok() const {
    if (!shapes_ok || !finite_ok || !weights_positive || !simplex_ok) return false;
    for (bool ok : component_pd)
      if (!ok) return false;
    return true;
  }
};

ValidationReport validate(const GmmParams& params);

/// Throws ConstraintError with a descriptive message unless validate()
/// passes in full.
void require_valid(const GmmParams& params);

/// Structural check of a prior specification (counts > 0, df >= 0,
/// scale > 0, box lower < upper). Throws ConstraintError on violation.
void require_valid(const Priors& priors, int components, int dim);

/// ln g(x | mu, sigma) for a full covariance, evaluated through the
/// Cholesky factor of sigma. Throws ConstraintError if sigma is not
/// positive definite.
double log_gaussian_density(const Vector& x, const Vector& mu, const Matrix& sigma);

/// Diagonal-mode variant; `variances` holds the per-dimension variances.
double log_gaussian_density(const Vector& x, const Vector& mu, const Vector& variances);

/// Sum over points of ln sum_j alpha_j g(x_i | mu_j, sigma_j), with the
/// inner sum computed by log-sum-exp. Validates `params` first.
double log_likelihood(const GmmParams& params, const Dataset& data);

/// Log-posterior for MAP estimation in diagonal mode:
/// log-likelihood plus the Dirichlet, inverse-chi-squared and uniform-box
/// prior log densities, with additive constants independent of theta
/// dropped. The convention is fixed: the Dirichlet term is
/// sum_j (c_j - 1) ln alpha_j, the variance term per dimension is
/// -(1 + df/2) ln v - df*scale/(2v) (omitted entirely when df == 0), and
/// the mean prior contributes 0 inside the box and -infinity outside.
/// Values are therefore comparable only within this implementation;
/// only differences of log-posterior are contractually meaningful.
double log_posterior(const GmmParams& params, const Dataset& data, const Priors& priors);

/// Prior log-density alone, same dropped-constant convention as
/// log_posterior. Returns -infinity when a mean leaves the box.
double log_prior(const GmmParams& params, const Priors& priors);

/// Serialize parameters into a flat optimizer-space vector.
/// In the Omega chart the weight block is omega_j = ln alpha_j - mean_k(ln alpha_k),
/// the zero-sum gauge that makes the softmax map one-to-one.
FlatVector flatten(const GmmParams& params, Chart chart);

/// Inverse of flatten for the given layout. Natural-chart weight
/// entries are taken as-is (no renormalization); Omega-chart entries go
/// through a max-shifted softmax. Throws LayoutError on length mismatch.
GmmParams unflatten(const FlatVector& flat, const FlatLayout& layout);

/// Softmax with max-shift; output is strictly inside the simplex for
/// finite input.
Vector softmax(const Vector& omega);

/// Prepared evaluator: factorizes every component once so that
/// per-point work is a triangular solve (full mode) or a scaled square
/// distance (diagonal mode). Evaluates the mixture density formula
/// as written for whatever positive weights it is given; simplex
/// feasibility is the caller's concern (log_likelihood checks it,
/// derivative probes deliberately step off the simplex).
class MixtureEvaluator {
 public:
  /// Throws ConstraintError if any weight is <= 0, any covariance fails
  /// Cholesky, or any variance is <= 0.
  explicit MixtureEvaluator(const GmmParams& params);

  int components() const { return static_cast<int>(log_weights_.size()); }
  int dim() const { return dim_; }

  /// Fills log_terms[j] = ln alpha_j + ln g(x | mu_j, sigma_j) and
  /// returns their log-sum-exp. `log_terms` must have size M and `work`
  /// size d; the evaluator itself stays const and thread-shareable.
  double log_point_density(const double* x, double* log_terms, double* work) const;

  /// Sum of log_point_density over all rows. Throws NumericError with
  /// the offending row index if a point evaluates to a non-finite value.
  double log_likelihood(const Dataset& data) const;

  /// ln alpha_j + log-normalization constant of component j.
  double log_weight(int j) const { return log_weights_[j]; }

 private:
  int dim_ = 0;
  CovMode mode_ = CovMode::Full;
  std::vector<double> log_weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> chol_;          // full mode: lower Cholesky factors
  std::vector<Vector> inv_variances_; // diagonal mode
  std::vector<double> log_norm_;      // -(d/2) ln 2pi - (1/2) ln det sigma
};

/// log-sum-exp of a contiguous range; returns -infinity for an empty or
/// all -infinity range.
double log_sum_exp(const double* values, int n);

}  // namespace mixem
