#include "mixem/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>

namespace mixem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Positive-definiteness gate for updated covariances. LLT is cheap at
// the dimensions we run and failing here is what distinguishes a
// near-singular component from a healthy one.
bool is_positive_definite(const Matrix& sigma) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) return false;
  const Matrix& l = llt.matrixLLT();
  for (int i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) return false;
  }
  return true;
}

}  // namespace

EStepResult e_step(const GmmParams& params, const Dataset& data,
                   const ObjectiveSpec& objective) {
  const MixtureEvaluator eval(params);  // throws on structurally invalid params
  const long n = data.size();
  const int m = params.components();
  const int d = params.dim();
  if (data.dim() != d) throw ConstraintError("dataset dimension does not match model");

  EStepResult out;
  out.mode = params.mode;
  out.n = n;
  out.responsibilities.resize(n, m);
  out.counts = Vector::Zero(m);
  out.s1.assign(m, Vector::Zero(d));
  if (params.mode == CovMode::Full) {
    out.s2_full.assign(m, Matrix::Zero(d, d));
  } else {
    out.s2_diag.assign(m, Vector::Zero(d));
  }

  std::vector<double> log_terms(m);
  std::vector<double> work(d);
  double objective_sum = 0.0;

  for (long i = 0; i < n; ++i) {
    const double* x = data.points.row(i).data();
    // Dataset rows are stored row-major so row(i).data() is contiguous.
    const double lse = eval.log_point_density(x, log_terms.data(), work.data());
    if (!std::isfinite(lse)) throw NumericError("non-finite point normalizer", i);
    objective_sum += lse;

    for (int j = 0; j < m; ++j) {
      const double h = std::exp(log_terms[j] - lse);
      out.responsibilities(i, j) = h;
      out.counts[j] += h;
      Vector& s1 = out.s1[j];
      if (params.mode == CovMode::Full) {
        Matrix& s2 = out.s2_full[j];
        for (int r = 0; r < d; ++r) {
          const double hx = h * x[r];
          s1[r] += hx;
          for (int c = 0; c <= r; ++c) s2(r, c) += hx * x[c];
        }
      } else {
        for (int r = 0; r < d; ++r) {
          const double hx = h * x[r];
          s1[r] += hx;
          out.s2_diag[j][r] += hx * x[r];
        }
      }
    }
  }

  if (params.mode == CovMode::Full) {
    for (Matrix& s2 : out.s2_full) {
      s2.triangularView<Eigen::StrictlyUpper>() =
          s2.triangularView<Eigen::StrictlyLower>().transpose();
    }
  }

  out.objective = objective_sum;
  if (objective.is_map()) out.objective += log_prior(params, objective.priors);
  return out;
}

GmmParams m_step(const EStepResult& stats, long data_size, const Vector* variance_floor) {
  const int m = stats.components();
  const int d = stats.dim();
  const double n = static_cast<double>(data_size);

  GmmParams out;
  out.mode = stats.mode;
  out.weights.resize(m);
  out.means.resize(m);

  for (int j = 0; j < m; ++j) {
    const double nj = stats.counts[j];
    if (nj < kEmptyComponentThreshold) {
      throw EmptyComponentError("component lost all responsibility mass in M-step", j);
    }
    out.weights[j] = nj / n;
    out.means[j] = stats.s1[j] / nj;
  }

  if (stats.mode == CovMode::Full) {
    out.covariances.resize(m);
    for (int j = 0; j < m; ++j) {
      const double nj = stats.counts[j];
      Matrix sigma = stats.s2_full[j] / nj - out.means[j] * out.means[j].transpose();
      sigma = ((sigma + sigma.transpose()) / 2.0).eval();
      if (variance_floor) {
        sigma.diagonal() = sigma.diagonal().cwiseMax(*variance_floor);
        // Clamping the diagonal may not be enough; inflate it until the
        // matrix factors or the attempt is clearly hopeless.
        double bump = variance_floor->mean();
        for (int attempt = 0; attempt < 40 && !is_positive_definite(sigma); ++attempt) {
          sigma.diagonal().array() += bump;
          bump *= 2.0;
        }
      }
      if (!is_positive_definite(sigma)) {
        throw NearSingularError("updated covariance is not positive definite", j);
      }
      out.covariances[j] = std::move(sigma);
    }
  } else {
    out.variances.resize(m);
    for (int j = 0; j < m; ++j) {
      const double nj = stats.counts[j];
      Vector v(d);
      for (int p = 0; p < d; ++p) {
        v[p] = stats.s2_diag[j][p] / nj - out.means[j][p] * out.means[j][p];
        if (variance_floor) v[p] = std::max(v[p], (*variance_floor)[p]);
        if (!(v[p] > 0.0) || !std::isfinite(v[p])) {
          throw NearSingularError("updated variance collapsed", j);
        }
      }
      out.variances[j] = std::move(v);
    }
  }

  return out;
}

GmmParams m_step_map(const EStepResult& stats, long data_size, const Priors& priors) {
  if (stats.mode != CovMode::Diagonal) {
    throw ConstraintError("MAP M-step is defined for diagonal covariances only");
  }
  const int m = stats.components();
  const int d = stats.dim();
  const double n = static_cast<double>(data_size);
  if (static_cast<int>(priors.dirichlet_counts.size()) != m ||
      priors.box_lower.size() != d || priors.box_upper.size() != d) {
    throw ConstraintError("prior shapes do not match the statistics");
  }

  const double count_sum = priors.dirichlet_counts.sum();
  const double weight_denom = n + count_sum - m;
  const double df = priors.variance_df;

  GmmParams out;
  out.mode = CovMode::Diagonal;
  out.weights.resize(m);
  out.means.resize(m);
  out.variances.resize(m);

  for (int j = 0; j < m; ++j) {
    const double nj = stats.counts[j];
    const double numer = nj + priors.dirichlet_counts[j] - 1.0;
    if (!(numer > 0.0)) {
      throw EmptyComponentError("MAP weight numerator is not positive", j);
    }
    out.weights[j] = numer / weight_denom;

    Vector mu(d);
    Vector v(d);
    if (nj < kEmptyComponentThreshold) {
      // No data speaks for this component: fall back to the prior mode.
      if (df <= 0.0) {
        throw EmptyComponentError("component lost all responsibility mass in M-step", j);
      }
      for (int p = 0; p < d; ++p) {
        mu[p] = (priors.box_lower[p] + priors.box_upper[p]) / 2.0;
        v[p] = df * priors.variance_scale / (df + 2.0);
      }
    } else {
      for (int p = 0; p < d; ++p) {
        const double mean_ml = stats.s1[j][p] / nj;
        const double s2 = stats.s2_diag[j][p] / nj - mean_ml * mean_ml;
        mu[p] = std::clamp(mean_ml, priors.box_lower[p], priors.box_upper[p]);
        // df == 0 means the variance prior is off and the update is plain ML.
        v[p] = df > 0.0 ? (nj * s2 + df * priors.variance_scale) / (nj + df + 2.0) : s2;
        if (!(v[p] > 0.0) || !std::isfinite(v[p])) {
          throw NearSingularError("updated variance collapsed", j);
        }
      }
    }
    out.means[j] = std::move(mu);
    out.variances[j] = std::move(v);
  }

  return out;
}

GmmParams em_update(const EStepResult& stats, long data_size, const ObjectiveSpec& objective) {
  return objective.is_map() ? m_step_map(stats, data_size, objective.priors)
                            : m_step(stats, data_size);
}

FlatVector em_direction(const GmmParams& current, const EStepResult& stats, Chart chart,
                        const ObjectiveSpec& objective) {
  const FlatVector target = flatten(em_update(stats, stats.n, objective), chart);
  const FlatVector base = flatten(current, chart);
  if (target.values.size() != base.values.size()) {
    throw LayoutError("EM update and current parameters disagree in layout");
  }
  FlatVector dir;
  dir.chart = chart;
  dir.values = target.values - base.values;
  return dir;
}

PruneResult prune_components(const GmmParams& params, long data_size) {
  const int m = params.components();
  const double weight_floor = 1.0 / static_cast<double>(data_size);

  PruneResult out;
  out.params.mode = params.mode;
  std::vector<int> keep;
  for (int j = 0; j < m; ++j) {
    bool dead = params.weights[j] < weight_floor;
    if (!dead) {
      if (params.mode == CovMode::Diagonal) {
        dead = (params.variances[j].array() < kPruneVarianceThreshold).any();
      } else {
        dead = (params.covariances[j].diagonal().array() < kPruneVarianceThreshold).any();
      }
    }
    if (dead) {
      out.pruned.push_back(j);
    } else {
      keep.push_back(j);
    }
  }
  if (keep.empty()) throw DegenerateModelError("every component fell below the pruning thresholds");

  const int mk = static_cast<int>(keep.size());
  out.params.weights.resize(mk);
  out.params.means.resize(mk);
  if (params.mode == CovMode::Full) {
    out.params.covariances.resize(mk);
  } else {
    out.params.variances.resize(mk);
  }
  double wsum = 0.0;
  for (int k = 0; k < mk; ++k) wsum += params.weights[keep[k]];
  for (int k = 0; k < mk; ++k) {
    const int j = keep[k];
    out.params.weights[k] = params.weights[j] / wsum;
    out.params.means[k] = params.means[j];
    if (params.mode == CovMode::Full) {
      out.params.covariances[k] = params.covariances[j];
    } else {
      out.params.variances[k] = params.variances[j];
    }
  }
  return out;
}

}  // namespace mixem
