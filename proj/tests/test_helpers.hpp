#pragma once

#include "mixem/types.hpp"

namespace mixem::test {

// Small fixed dataset shared across the unit tests; reference values for
// it were computed with an independent numpy/mpmath implementation.
inline Dataset tiny_dataset() {
  Dataset data;
  data.points.resize(6, 2);
  data.points << 0.0, 0.1,  //
      0.2, -0.3,            //
      1.8, 2.2,             //
      2.1, 1.7,             //
      -0.4, 0.5,            //
      2.3, 2.6;
  return data;
}

// Two well-separated full-covariance components.
inline GmmParams full_params() {
  GmmParams p;
  p.mode = CovMode::Full;
  p.weights = Vector(2);
  p.weights << 0.4, 0.6;
  p.means = {Vector::Zero(2), Vector::Constant(2, 2.0)};
  Matrix c0(2, 2), c1(2, 2);
  c0 << 1.0, 0.2, 0.2, 0.8;
  c1 << 0.5, -0.1, -0.1, 0.9;
  p.covariances = {c0, c1};
  return p;
}

// Diagonal variant used by the MAP tests.
inline GmmParams diag_params() {
  GmmParams p;
  p.mode = CovMode::Diagonal;
  p.weights = Vector(2);
  p.weights << 0.3, 0.7;
  p.means = {Vector::Zero(2), Vector::Constant(2, 2.0)};
  Vector v0(2), v1(2);
  v0 << 1.0, 0.8;
  v1 << 0.5, 0.9;
  p.variances = {v0, v1};
  return p;
}

inline Priors test_priors() {
  Priors pr;
  pr.dirichlet_counts = Vector::Constant(2, 1.5);
  pr.box_lower = Vector::Constant(2, -1.0);
  pr.box_upper = Vector::Constant(2, 3.0);
  pr.variance_df = 0.5;
  pr.variance_scale = 1.0;
  return pr;
}

}  // namespace mixem::test
