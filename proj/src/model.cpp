#include "mixem/model.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mixem {

namespace {

constexpr double kLn2Pi = 1.8378770664093454835606594728112;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSimplexTol = 1e-12;

bool all_finite(const Vector& v) { return v.allFinite(); }
bool all_finite(const Matrix& m) { return m.allFinite(); }

// Attempted Cholesky; empty on failure. Symmetry is required, checked
// against a scaled tolerance.
bool cholesky(const Matrix& sigma, Matrix& lower) {
  if (sigma.rows() != sigma.cols()) return false;
  const double scale = sigma.cwiseAbs().maxCoeff();
  if (!(sigma - sigma.transpose()).isZero(1e-12 * std::max(scale, 1.0))) return false;
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  // Eigen can report success on a semi-definite input; insist on a
  // strictly positive diagonal.
  for (int i = 0; i < lower.rows(); ++i)
    if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) return false;
  return true;
}

}  // namespace

double log_sum_exp(const double* values, int n) {
  double m = -kInf;
  for (int i = 0; i < n; ++i) m = std::max(m, values[i]);
  if (!std::isfinite(m)) return m;  // empty, all -inf, or a NaN/inf slipped in
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(values[i] - m);
  return m + std::log(s);
}

ValidationReport validate(const GmmParams& params) {
  ValidationReport rep;
  const int m = params.components();
  const int d = params.dim();

  rep.shapes_ok = m > 0 && d > 0 && static_cast<int>(params.means.size()) == m;
  if (rep.shapes_ok) {
    for (const auto& mu : params.means)
      if (mu.size() != d) rep.shapes_ok = false;
    if (params.mode == CovMode::Full) {
      if (static_cast<int>(params.covariances.size()) != m) rep.shapes_ok = false;
      else
        for (const auto& s : params.covariances)
          if (s.rows() != d || s.cols() != d) rep.shapes_ok = false;
    } else {
      if (static_cast<int>(params.variances.size()) != m) rep.shapes_ok = false;
      else
        for (const auto& v : params.variances)
          if (v.size() != d) rep.shapes_ok = false;
    }
  }
  if (!rep.shapes_ok) return rep;

  rep.finite_ok = all_finite(params.weights);
  for (const auto& mu : params.means) rep.finite_ok = rep.finite_ok && all_finite(mu);
  if (params.mode == CovMode::Full)
    for (const auto& s : params.covariances) rep.finite_ok = rep.finite_ok && all_finite(s);
  else
    for (const auto& v : params.variances) rep.finite_ok = rep.finite_ok && all_finite(v);

  rep.weights_positive = true;
  for (int j = 0; j < m; ++j)
    if (!(params.weights[j] > 0.0)) rep.weights_positive = false;
  rep.weight_sum = params.weights.sum();
  rep.simplex_ok = rep.finite_ok && std::abs(rep.weight_sum - 1.0) <= kSimplexTol;

  rep.component_pd.assign(m, false);
  Matrix lower;
  for (int j = 0; j < m; ++j) {
    if (!rep.finite_ok) break;
    if (params.mode == CovMode::Full) {
      rep.component_pd[j] = cholesky(params.covariances[j], lower);
    } else {
      bool ok = true;
      for (int p = 0; p < d; ++p)
        if (!(params.variances[j][p] > 0.0)) ok = false;
      rep.component_pd[j] = ok;
    }
  }
  return rep;
}

void require_valid(const GmmParams& params) {
  const ValidationReport rep = validate(params);
  if (rep.all_ok()) return;
  if (!rep.shapes_ok) throw ConstraintError("parameter containers disagree with (M, d, mode)");
  if (!rep.finite_ok) throw ConstraintError("parameter set contains non-finite values");
  if (!rep.weights_positive) throw ConstraintError("mixing weights must all be positive");
  if (!rep.simplex_ok)
    throw ConstraintError("mixing weights sum to " + std::to_string(rep.weight_sum) +
                          ", expected 1 within 1e-12");
  for (size_t j = 0; j < rep.component_pd.size(); ++j)
    if (!rep.component_pd[j])
      throw ConstraintError("covariance of component " + std::to_string(j) +
                            " is not positive definite");
}

void require_valid(const Priors& priors, int components, int dim) {
  if (priors.dirichlet_counts.size() != components)
    throw ConstraintError("dirichlet_counts length does not match component count");
  for (int j = 0; j < components; ++j)
    if (!(priors.dirichlet_counts[j] > 0.0))
      throw ConstraintError("dirichlet pseudo-counts must be positive");
  if (priors.box_lower.size() != dim || priors.box_upper.size() != dim)
    throw ConstraintError("mean-box bounds do not match data dimension");
  for (int p = 0; p < dim; ++p)
    if (!(priors.box_lower[p] < priors.box_upper[p]))
      throw ConstraintError("mean box must have lower < upper per dimension");
  if (!(priors.variance_df >= 0.0))
    throw ConstraintError("variance_df must be >= 0 (0 disables the variance prior)");
  if (!(priors.variance_scale > 0.0))
    throw ConstraintError("variance_scale must be positive");
}

double log_gaussian_density(const Vector& x, const Vector& mu, const Matrix& sigma) {
  const int d = static_cast<int>(x.size());
  Matrix lower;
  if (!cholesky(sigma, lower))
    throw ConstraintError("covariance is not symmetric positive definite");
  Vector z = x - mu;
  lower.triangularView<Eigen::Lower>().solveInPlace(z);
  double log_det_half = 0.0;
  for (int i = 0; i < d; ++i) log_det_half += std::log(lower(i, i));
  return -0.5 * d * kLn2Pi - log_det_half - 0.5 * z.squaredNorm();
}

double log_gaussian_density(const Vector& x, const Vector& mu, const Vector& variances) {
  const int d = static_cast<int>(x.size());
  double acc = -0.5 * d * kLn2Pi;
  for (int p = 0; p < d; ++p) {
    const double v = variances[p];
    if (!(v > 0.0)) throw ConstraintError("variance must be positive");
    const double r = x[p] - mu[p];
    acc -= 0.5 * std::log(v) + 0.5 * r * r / v;
  }
  return acc;
}

MixtureEvaluator::MixtureEvaluator(const GmmParams& params)
    : dim_(params.dim()), mode_(params.mode) {
  const int m = params.components();
  if (m == 0 || dim_ == 0) throw ConstraintError("empty parameter set");
  log_weights_.resize(m);
  means_ = params.means;
  log_norm_.resize(m);
  if (mode_ == CovMode::Full) chol_.resize(m);
  else inv_variances_.resize(m);

  for (int j = 0; j < m; ++j) {
    const double a = params.weights[j];
    if (!(a > 0.0)) throw ConstraintError("weight of component " + std::to_string(j) +
                                          " is not positive");
    log_weights_[j] = std::log(a);
    double log_det_half = 0.0;
    if (mode_ == CovMode::Full) {
      if (!cholesky(params.covariances[j], chol_[j]))
        throw ConstraintError("covariance of component " + std::to_string(j) +
                              " is not positive definite");
      for (int i = 0; i < dim_; ++i) log_det_half += std::log(chol_[j](i, i));
    } else {
      inv_variances_[j].resize(dim_);
      for (int p = 0; p < dim_; ++p) {
        const double v = params.variances[j][p];
        if (!(v > 0.0))
          throw ConstraintError("variance of component " + std::to_string(j) +
                                " is not positive");
        inv_variances_[j][p] = 1.0 / v;
        log_det_half += 0.5 * std::log(v);
      }
    }
    log_norm_[j] = -0.5 * dim_ * kLn2Pi - log_det_half;
  }
}

double MixtureEvaluator::log_point_density(const double* x, double* log_terms,
                                           double* work) const {
  const int m = components();
  for (int j = 0; j < m; ++j) {
    double quad = 0.0;
    if (mode_ == CovMode::Full) {
      const Matrix& l = chol_[j];
      const double* mu = means_[j].data();
      // forward substitution of L z = (x - mu), accumulating |z|^2
      for (int r = 0; r < dim_; ++r) {
        double s = x[r] - mu[r];
        for (int c = 0; c < r; ++c) s -= l(r, c) * work[c];
        const double z = s / l(r, r);
        work[r] = z;
        quad += z * z;
      }
    } else {
      const double* mu = means_[j].data();
      const double* iv = inv_variances_[j].data();
      for (int p = 0; p < dim_; ++p) {
        const double r = x[p] - mu[p];
        quad += r * r * iv[p];
      }
    }
    log_terms[j] = log_weights_[j] + log_norm_[j] - 0.5 * quad;
  }
  return log_sum_exp(log_terms, m);
}

double MixtureEvaluator::log_likelihood(const Dataset& data) const {
  const long n = data.size();
  std::vector<double> terms(components());
  std::vector<double> work(dim_);
  // row-wise copy keeps the point contiguous regardless of storage order
  Vector x(dim_);
  double total = 0.0;
  for (long i = 0; i < n; ++i) {
    x = data.points.row(i);
    const double lp = log_point_density(x.data(), terms.data(), work.data());
    if (!std::isfinite(lp))
      throw NumericError("non-finite point log-density at data point " + std::to_string(i), i);
    total += lp;
  }
  return total;
}

double log_likelihood(const GmmParams& params, const Dataset& data) {
  if (data.size() < 1) throw ConstraintError("dataset is empty");
  if (data.dim() != params.dim())
    throw ConstraintError("data dimension does not match parameters");
  require_valid(params);
  return MixtureEvaluator(params).log_likelihood(data);
}

double log_prior(const GmmParams& params, const Priors& priors) {
  if (params.mode != CovMode::Diagonal)
    throw ConstraintError("MAP priors are defined for diagonal mode only");
  const int m = params.components();
  const int d = params.dim();
  require_valid(priors, m, d);

  for (int j = 0; j < m; ++j)
    for (int p = 0; p < d; ++p) {
      const double mu = params.means[j][p];
      if (mu < priors.box_lower[p] || mu > priors.box_upper[p]) return -kInf;
    }

  double acc = 0.0;
  for (int j = 0; j < m; ++j) acc += (priors.dirichlet_counts[j] - 1.0) * std::log(params.weights[j]);
  if (priors.variance_df > 0.0) {
    const double df = priors.variance_df;
    const double rate = df * priors.variance_scale / 2.0;
    for (int j = 0; j < m; ++j)
      for (int p = 0; p < d; ++p) {
        const double v = params.variances[j][p];
        acc += -(1.0 + df / 2.0) * std::log(v) - rate / v;
      }
  }
  return acc;
}

double log_posterior(const GmmParams& params, const Dataset& data, const Priors& priors) {
  const double lp = log_prior(params, priors);
  if (lp == -kInf) return -kInf;
  return log_likelihood(params, data) + lp;
}

Vector softmax(const Vector& omega) {
  const double m = omega.maxCoeff();
  Vector a = (omega.array() - m).exp();
  a /= a.sum();
  return a;
}

FlatVector flatten(const GmmParams& params, Chart chart) {
  const FlatLayout layout = layout_of(params);
  FlatVector flat;
  flat.chart = chart;
  flat.values.resize(layout.total());
  const int m = layout.components;
  const int d = layout.dim;

  if (chart == Chart::Natural) {
    flat.values.head(m) = params.weights;
  } else {
    Vector omega = params.weights.array().log();
    omega.array() -= omega.mean();  // zero-sum gauge
    flat.values.head(m) = omega;
  }
  for (int j = 0; j < m; ++j)
    flat.values.segment(layout.mean_offset(j), d) = params.means[j];
  for (int j = 0; j < m; ++j) {
    int k = layout.cov_offset(j);
    if (layout.mode == CovMode::Full) {
      const Matrix& s = params.covariances[j];
      for (int r = 0; r < d; ++r)
        for (int c = 0; c <= r; ++c) flat.values[k++] = s(r, c);
    } else {
      flat.values.segment(k, d) = params.variances[j];
    }
  }
  return flat;
}

GmmParams unflatten(const FlatVector& flat, const FlatLayout& layout) {
  if (flat.values.size() != layout.total())
    throw LayoutError("flat vector has length " + std::to_string(flat.values.size()) +
                      ", layout expects " + std::to_string(layout.total()));
  const int m = layout.components;
  const int d = layout.dim;
  GmmParams params;
  params.mode = layout.mode;
  params.weights = flat.chart == Chart::Natural ? Vector(flat.values.head(m))
                                                : softmax(flat.values.head(m));
  params.means.resize(m);
  for (int j = 0; j < m; ++j)
    params.means[j] = flat.values.segment(layout.mean_offset(j), d);
  if (layout.mode == CovMode::Full) {
    params.covariances.resize(m);
    for (int j = 0; j < m; ++j) {
      Matrix s(d, d);
      int k = layout.cov_offset(j);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c <= r; ++c) {
          s(r, c) = flat.values[k];
          s(c, r) = flat.values[k];
          ++k;
        }
      params.covariances[j] = std::move(s);
    }
  } else {
    params.variances.resize(m);
    for (int j = 0; j < m; ++j)
      params.variances[j] = flat.values.segment(layout.cov_offset(j), d);
  }
  return params;
}

}  // namespace mixem
