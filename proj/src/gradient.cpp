#include "mixem/gradient.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace mixem {

FlatVector gradient_from_em(const GmmParams& params, const EStepResult& stats, Chart chart,
                            const ObjectiveSpec& objective) {
  const int m = params.components();
  const int d = params.dim();
  if (stats.components() != m || stats.dim() != d) {
    throw LayoutError("statistics do not match the parameter layout");
  }
  const FlatLayout layout = layout_of(params);
  const bool map = objective.is_map();
  if (map && params.mode != CovMode::Diagonal) {
    throw ConstraintError("MAP objective is defined for diagonal covariances only");
  }

  Vector g = Vector::Zero(layout.total());

  // Weights block, natural chart first: d/d alpha_j of the data term is
  // N_j / alpha_j; the Dirichlet prior adds (c_j - 1) / alpha_j.
  Vector galpha(m);
  for (int j = 0; j < m; ++j) {
    double a = stats.counts[j] / params.weights[j];
    if (map) a += (objective.priors.dirichlet_counts[j] - 1.0) / params.weights[j];
    galpha[j] = a;
  }
  if (chart == Chart::Omega) {
    // omega_j parameterizes alpha through a softmax, so
    // dL/d omega_j = alpha_j (g_j - sum_k alpha_k g_k).
    const double avg = params.weights.dot(galpha);
    for (int j = 0; j < m; ++j) g[j] = params.weights[j] * (galpha[j] - avg);
  } else {
    g.head(m) = galpha;
  }

  for (int j = 0; j < m; ++j) {
    const double nj = stats.counts[j];
    const Vector& mu = params.means[j];
    const Vector& s1 = stats.s1[j];

    if (params.mode == CovMode::Full) {
      const Matrix& sigma = params.covariances[j];
      Eigen::LLT<Matrix> llt(sigma);
      if (llt.info() != Eigen::Success) {
        throw NearSingularError("covariance is not positive definite", j);
      }
      g.segment(layout.mean_offset(j), d) = llt.solve(s1 - nj * mu);

      // C_j = sum_i h x x^T - S1 mu^T - mu S1^T + N mu mu^T is the second
      // moment about the current mean; the covariance gradient is
      // 1/2 Sigma^{-1} (C_j - N_j Sigma) Sigma^{-1}.
      Matrix c = stats.s2_full[j] - s1 * mu.transpose() - mu * s1.transpose() +
                 nj * mu * mu.transpose();
      c -= nj * sigma;
      Matrix half = llt.solve(c);                    // Sigma^{-1} (C - N Sigma)
      Matrix grad = llt.solve(half.transpose());     // Sigma^{-1} (...)^T, symmetric up to roundoff
      grad = ((grad + grad.transpose()) / 4.0).eval();  // symmetrize and apply the 1/2

      double* out = g.data() + layout.cov_offset(j);
      for (int r = 0; r < d; ++r) {
        for (int c2 = 0; c2 <= r; ++c2) {
          *out++ = (r == c2) ? grad(r, r) : 2.0 * grad(r, c2);
        }
      }
    } else {
      const Vector& v = params.variances[j];
      auto gm = g.segment(layout.mean_offset(j), d);
      auto gv = g.segment(layout.cov_offset(j), d);
      for (int p = 0; p < d; ++p) {
        gm[p] = (s1[p] - nj * mu[p]) / v[p];
        const double c = stats.s2_diag[j][p] - 2.0 * mu[p] * s1[p] + nj * mu[p] * mu[p];
        gv[p] = (c - nj * v[p]) / (2.0 * v[p] * v[p]);
        if (map && objective.priors.variance_df > 0.0) {
          const double df = objective.priors.variance_df;
          gv[p] += -(1.0 + df / 2.0) / v[p] +
                   df * objective.priors.variance_scale / (2.0 * v[p] * v[p]);
        }
        // The box prior on the mean is flat inside the box and the
        // optimizers never evaluate outside it, so it contributes nothing.
      }
    }
  }

  FlatVector out;
  out.chart = chart;
  out.values = std::move(g);
  return out;
}

Vector project_alpha_gradient(const Vector& g) {
  return g.array() - g.mean();
}

FlatVector finite_difference_gradient(const std::function<double(const FlatVector&)>& objective,
                                      const FlatVector& at, double step) {
  if (!(step > 0.0)) throw ConstraintError("finite-difference step must be positive");
  FlatVector probe = at;
  FlatVector out;
  out.chart = at.chart;
  out.values.resize(at.values.size());
  for (long i = 0; i < at.values.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + step;
    const double hi = objective(probe);
    probe.values[i] = saved - step;
    const double lo = objective(probe);
    probe.values[i] = saved;
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      throw NumericError("objective not finite at finite-difference probe", i);
    }
    out.values[i] = (hi - lo) / (2.0 * step);
  }
  return out;
}

}  // namespace mixem
