#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace mixem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Row-major storage so one data point (one row) is contiguous in memory.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Covariance parameterization of a mixture component.
enum class CovMode { Full, Diagonal };

/// Coordinate chart used for the flat optimizer-space vector.
/// Natural keeps mixing weights as-is; Omega maps them through a
/// zero-sum softmax parameterization so weight coordinates are
/// unconstrained.
enum class Chart { Natural, Omega };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameter set violates a model constraint (simplex, positive
/// definiteness, positivity of variances).
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared during evaluation. `index` carries the
/// offending data point when known, -1 otherwise.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, long index = -1)
      : Error(what), index(index) {}
  long index;
};

/// M-step received a component with (numerically) zero responsibility mass.
class EmptyComponentError : public Error {
 public:
  EmptyComponentError(const std::string& what, int component)
      : Error(what), component(component) {}
  int component;
};

/// M-step produced a covariance that is not positive definite.
class NearSingularError : public Error {
 public:
  NearSingularError(const std::string& what, int component)
      : Error(what), component(component) {}
  int component;
};

/// Flat vector length does not match the layout implied by (M, d, mode).
class LayoutError : public Error {
 public:
  using Error::Error;
};

/// Every component of the model was pruned away.
class DegenerateModelError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Feasibility halving shrank a step to nothing.
class ZeroStepError : public Error {
 public:
  using Error::Error;
};

/// Mixture-of-Gaussians parameter set.
///
/// `covariances` is used in Full mode (one symmetric d x d matrix per
/// component), `variances` in Diagonal mode (one length-d vector of
/// per-dimension variances per component). The unused container stays
/// empty.
struct GmmParams {
  CovMode mode = CovMode::Full;
  Vector weights;                   // M mixing proportions
  std::vector<Vector> means;        // M vectors of length d
  std::vector<Matrix> covariances;  // Full mode
  std::vector<Vector> variances;    // Diagonal mode

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
};

/// A data set of N points in d dimensions, one row per point.
struct Dataset {
  RowMatrix points;

  long size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
};

/// Priors for MAP estimation over a diagonal-covariance mixture:
/// Dirichlet pseudo-counts on the weights, a uniform box prior on the
/// means, and a scaled inverse-chi-squared prior on each variance.
/// `variance_df == 0` disables the variance prior entirely (flat prior).
struct Priors {
  Vector dirichlet_counts;  // M pseudo-counts, all > 0
  Vector box_lower;         // d per-dimension bounds, lower < upper
  Vector box_upper;
  double variance_df = 0.0;
  double variance_scale = 1.0;
};

/// Objective selector shared by the evaluation and optimizer layers.
struct ObjectiveSpec {
  enum class Kind { MaxLikelihood, MaxPosterior };
  Kind kind = Kind::MaxLikelihood;
  Priors priors;  // meaningful only for MaxPosterior

  static ObjectiveSpec ml() { return {}; }
  static ObjectiveSpec map(Priors p) {
    ObjectiveSpec s;
    s.kind = Kind::MaxPosterior;
    s.priors = std::move(p);
    return s;
  }
  bool is_map() const { return kind == Kind::MaxPosterior; }
};

/// Shape descriptor for flat vectors: fixes the block layout for a
/// given (M, d, mode) triple.
///
/// Layout: weight-or-omega block (M entries), then means
/// (component-major, M*d entries), then the covariance block. In Full
/// mode each component contributes its lower triangle in row-major
/// order (d(d+1)/2 entries); in Diagonal mode each contributes its d
/// variances.
struct FlatLayout {
  int components = 0;
  int dim = 0;
  CovMode mode = CovMode::Full;

  int weight_size() const { return components; }
  int mean_size() const { return components * dim; }
  int cov_per_component() const {
    return mode == CovMode::Full ? dim * (dim + 1) / 2 : dim;
  }
  int cov_size() const { return components * cov_per_component(); }
  int total() const { return weight_size() + mean_size() + cov_size(); }

  int mean_offset(int j) const { return components + j * dim; }
  int cov_offset(int j) const {
    return components + components * dim + j * cov_per_component();
  }

  bool operator==(const FlatLayout&) const = default;
};

inline FlatLayout layout_of(const GmmParams& p) {
  return FlatLayout{p.components(), p.dim(), p.mode};
}

/// Parameters serialized into a single optimizer-space vector under a
/// chart. The layout is implied by the (M, d, mode) of the parameters
/// it came from; see FlatLayout.
struct FlatVector {
  Vector values;
  Chart chart = Chart::Natural;

  long size() const { return values.size(); }
};

}  // namespace mixem
