#include <doctest.h>

#include <cmath>

#include "mixem/em.hpp"
#include "test_helpers.hpp"

using namespace mixem;
using namespace mixem::test;

// Reference numbers in this file were computed with an independent numpy
// implementation of the E- and M-step formulas (see the repository notes
// on testing in the README).

TEST_CASE("e_step reproduces independently computed sufficient statistics") {
  const Dataset data = tiny_dataset();
  const EStepResult st = e_step(full_params(), data);

  CHECK(st.mode == CovMode::Full);
  CHECK(st.n == 6);
  CHECK(st.components() == 2);
  CHECK(st.dim() == 2);
  CHECK(st.objective == doctest::Approx(-14.478054796583695).epsilon(1e-13));

  // Spot-checked responsibilities.
  CHECK(st.responsibilities(0, 0) == doctest::Approx(0.99820394660171075).epsilon(1e-13));
  CHECK(st.responsibilities(0, 1) == doctest::Approx(0.0017960533982892238).epsilon(1e-13));
  CHECK(st.responsibilities(3, 0) == doctest::Approx(0.019702969771845307).epsilon(1e-13));
  CHECK(st.responsibilities(3, 1) == doctest::Approx(0.98029703022815484).epsilon(1e-13));
  for (int i = 0; i < 6; ++i)
    CHECK(st.responsibilities.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));

  CHECK(st.counts[0] == doctest::Approx(3.0292545312172585).epsilon(1e-13));
  CHECK(st.counts[1] == doctest::Approx(2.970745468782741).epsilon(1e-13));
  CHECK(st.counts.sum() == doctest::Approx(6.0).epsilon(1e-14));

  CHECK(st.s1[0][0] == doctest::Approx(-0.13253414800453883).epsilon(1e-12));
  CHECK(st.s1[0][1] == doctest::Approx(0.36461533169001337).epsilon(1e-12));
  CHECK(st.s1[1][0] == doctest::Approx(6.132534148004539).epsilon(1e-13));
  CHECK(st.s1[1][1] == doctest::Approx(6.4353846683099869).epsilon(1e-13));

  CHECK(st.s2_full[0](0, 0) == doctest::Approx(0.33638901740182808).epsilon(1e-12));
  CHECK(st.s2_full[0](0, 1) == doctest::Approx(-0.12983979711946977).epsilon(1e-12));
  CHECK(st.s2_full[0](1, 0) == doctest::Approx(-0.12983979711946977).epsilon(1e-12));
  CHECK(st.s2_full[0](1, 1) == doctest::Approx(0.47798340902429265).epsilon(1e-12));
  CHECK(st.s2_full[1](0, 0) == doctest::Approx(12.803610982598173).epsilon(1e-13));
  CHECK(st.s2_full[1](0, 1) == doctest::Approx(13.37983979711947).epsilon(1e-13));
  CHECK(st.s2_full[1](1, 1) == doctest::Approx(14.362016590975706).epsilon(1e-13));
}

TEST_CASE("m_step reproduces independently computed weighted moments") {
  const Dataset data = tiny_dataset();
  const EStepResult st = e_step(full_params(), data);
  const GmmParams next = m_step(st, data.size());

  CHECK(next.weights[0] == doctest::Approx(0.50487575520287642).epsilon(1e-13));
  CHECK(next.weights[1] == doctest::Approx(0.49512424479712352).epsilon(1e-13));
  CHECK(next.means[0][0] == doctest::Approx(-0.043751407033888981).epsilon(1e-12));
  CHECK(next.means[0][1] == doctest::Approx(0.12036470621156367).epsilon(1e-12));
  CHECK(next.means[1][0] == doctest::Approx(2.0643081719543401).epsilon(1e-13));
  CHECK(next.means[1][1] == doctest::Approx(2.1662524561375087).epsilon(1e-13));
  CHECK(next.covariances[0](0, 0) == doctest::Approx(0.10913261283915592).epsilon(1e-12));
  CHECK(next.covariances[0](1, 0) == doctest::Approx(-0.037595838236194605).epsilon(1e-12));
  CHECK(next.covariances[0](1, 1) == doctest::Approx(0.14330145825374319).epsilon(1e-12));
  CHECK(next.covariances[1](0, 0) == doctest::Approx(0.048530117305010556).epsilon(1e-12));
  CHECK(next.covariances[1](0, 1) == doctest::Approx(0.032053448421654807).epsilon(1e-12));
  CHECK(next.covariances[1](1, 1) == doctest::Approx(0.14183266506240777).epsilon(1e-12));
  CHECK(next.covariances[0].isApprox(next.covariances[0].transpose(), 1e-15));

  // One EM step never decreases the log-likelihood.
  CHECK(log_likelihood(next, data) >= st.objective);
}

TEST_CASE("MAP e_step adds the prior to the objective") {
  const Dataset data = tiny_dataset();
  const Priors pr = test_priors();
  const EStepResult st = e_step(diag_params(), data, ObjectiveSpec::map(pr));
  CHECK(st.mode == CovMode::Diagonal);
  CHECK(st.objective == doctest::Approx(-15.723175003205922).epsilon(1e-13));
  CHECK(st.counts[0] == doctest::Approx(2.9917516172514018).epsilon(1e-13));
  CHECK(st.counts[1] == doctest::Approx(3.0082483827485986).epsilon(1e-13));
  // The responsibilities themselves do not depend on the prior.
  const EStepResult ml = e_step(diag_params(), data);
  CHECK(st.responsibilities.isApprox(ml.responsibilities, 1e-14));
}

TEST_CASE("m_step_map reproduces the posterior-mode update") {
  const Dataset data = tiny_dataset();
  const Priors pr = test_priors();
  const EStepResult st = e_step(diag_params(), data, ObjectiveSpec::map(pr));
  const GmmParams next = m_step_map(st, data.size(), pr);

  CHECK(next.weights[0] == doctest::Approx(0.49882165960734309).epsilon(1e-13));
  CHECK(next.weights[1] == doctest::Approx(0.50117834039265696).epsilon(1e-13));
  CHECK(next.means[0][0] == doctest::Approx(-0.060212405655612415).epsilon(1e-12));
  CHECK(next.means[0][1] == doctest::Approx(0.10640793273510321).epsilon(1e-12));
  CHECK(next.means[1][0] == doctest::Approx(2.0543983659860094).epsilon(1e-13));
  CHECK(next.means[1][1] == doctest::Approx(2.1546272350121471).epsilon(1e-13));
  CHECK(next.variances[0][0] == doctest::Approx(0.13263085307597605).epsilon(1e-12));
  CHECK(next.variances[0][1] == doctest::Approx(0.1549899688309565).epsilon(1e-12));
  CHECK(next.variances[1][0] == doctest::Approx(0.12786404687199041).epsilon(1e-12));
  CHECK(next.variances[1][1] == doctest::Approx(0.17962353146359084).epsilon(1e-12));

  // One MAP-EM step never decreases the log-posterior.
  CHECK(log_posterior(next, data, pr) >= st.objective);
}

TEST_CASE("MAP means are clipped to the prior box") {
  Dataset data;
  data.points.resize(4, 1);
  data.points << 4.0, 4.2, 4.4, 4.6;  // all above the box
  GmmParams p;
  p.mode = CovMode::Diagonal;
  p.weights = Vector::Ones(1);
  p.means = {Vector::Constant(1, 2.0)};
  p.variances = {Vector::Ones(1)};
  Priors pr;
  pr.dirichlet_counts = Vector::Ones(1);
  pr.box_lower = Vector::Constant(1, 0.0);
  pr.box_upper = Vector::Constant(1, 3.0);
  pr.variance_df = 0.0;
  const EStepResult st = e_step(p, data, ObjectiveSpec::map(pr));
  const GmmParams next = m_step_map(st, data.size(), pr);
  CHECK(next.means[0][0] == doctest::Approx(3.0));  // sample mean 4.3, clipped
}

TEST_CASE("with a flat prior the MAP update reduces to maximum likelihood") {
  const Dataset data = tiny_dataset();
  Priors flat;
  flat.dirichlet_counts = Vector::Ones(2);  // counts of one: no pull on the weights
  flat.box_lower = Vector::Constant(2, -100.0);
  flat.box_upper = Vector::Constant(2, 100.0);
  flat.variance_df = 0.0;  // disables the variance prior entirely

  const EStepResult st = e_step(diag_params(), data, ObjectiveSpec::map(flat));
  const GmmParams map_next = m_step_map(st, data.size(), flat);
  const GmmParams ml_next = m_step(st, data.size());

  CHECK(map_next.weights.isApprox(ml_next.weights, 1e-14));
  for (int j = 0; j < 2; ++j) {
    CHECK(map_next.means[j].isApprox(ml_next.means[j], 1e-14));
    CHECK(map_next.variances[j].isApprox(ml_next.variances[j], 1e-14));
  }
}

TEST_CASE("em_direction is the flat difference to the EM update") {
  const Dataset data = tiny_dataset();
  const GmmParams p = full_params();
  const EStepResult st = e_step(p, data);
  const GmmParams next = em_update(st, data.size(), ObjectiveSpec::ml());
  for (Chart chart : {Chart::Natural, Chart::Omega}) {
    const FlatVector dir = em_direction(p, st, chart);
    const Vector expect = flatten(next, chart).values - flatten(p, chart).values;
    CHECK(dir.chart == chart);
    CHECK(dir.values.isApprox(expect, 1e-12));
  }
}

TEST_CASE("empty components raise EmptyComponentError") {
  // Responsibilities concentrated on component 0; component 1 starves.
  Dataset data;
  data.points.resize(3, 1);
  data.points << 0.0, 0.1, -0.1;
  GmmParams p;
  p.mode = CovMode::Diagonal;
  p.weights = Vector(2);
  p.weights << 0.999999, 1e-6;
  p.means = {Vector::Zero(1), Vector::Constant(1, 1000.0)};
  p.variances = {Vector::Ones(1), Vector::Constant(1, 1e-4)};
  const EStepResult st = e_step(p, data);
  CHECK(st.counts[1] < kEmptyComponentThreshold);
  CHECK_THROWS_AS(m_step(st, data.size()), EmptyComponentError);
}

TEST_CASE("a variance floor rescues an otherwise singular M-step") {
  // Two coincident points give zero within-component variance.
  Dataset data;
  data.points.resize(2, 1);
  data.points << 1.0, 1.0;
  GmmParams p;
  p.mode = CovMode::Diagonal;
  p.weights = Vector::Ones(1);
  p.means = {Vector::Zero(1)};
  p.variances = {Vector::Ones(1)};
  const EStepResult st = e_step(p, data);
  CHECK_THROWS_AS(m_step(st, data.size()), NearSingularError);
  const Vector floor = Vector::Constant(1, 1e-3);
  const GmmParams fixed = m_step(st, data.size(), &floor);
  CHECK(fixed.variances[0][0] == doctest::Approx(1e-3));
}

TEST_CASE("prune_components removes starved and collapsed components") {
  GmmParams p;
  p.mode = CovMode::Diagonal;
  p.weights = Vector(3);
  p.weights << 0.6, 0.3999, 1e-4;  // last one below 1/N for N=2000... using N=1000
  p.means = {Vector::Zero(1), Vector::Ones(1), Vector::Constant(1, 2.0)};
  p.variances = {Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)};

  // Weight below 1/N triggers removal.
  const PruneResult r1 = prune_components(p, 1000);
  CHECK(r1.pruned == std::vector<int>{2});
  CHECK(r1.params.components() == 2);
  CHECK(r1.params.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));

  // Collapsed variance triggers removal regardless of weight.
  GmmParams q = p;
  q.weights << 0.4, 0.4, 0.2;
  q.variances[1][0] = 1e-120;
  const PruneResult r2 = prune_components(q, 1000);
  CHECK(r2.pruned == std::vector<int>{1});

  // Healthy mixtures are left alone.
  GmmParams ok = p;
  ok.weights << 0.5, 0.3, 0.2;
  CHECK(prune_components(ok, 1000).pruned.empty());

  // Everything below threshold cannot be repaired.
  GmmParams hopeless = p;
  hopeless.weights << 1e-5, 1e-5, 1.0 - 2e-5;  // two starved at N=1000...
  hopeless.variances[2][0] = 1e-200;           // ...and the heavy one collapsed
  CHECK_THROWS_AS(prune_components(hopeless, 1000), DegenerateModelError);
}

TEST_CASE("e_step rejects non-finite rows with the point index") {
  Dataset data = tiny_dataset();
  GmmParams p = full_params();
  p.weights << 1e-320, 1.0 - 1e-320;  // log weight overflows to -inf
  // The far component still covers every point, so this stays finite.
  CHECK_NOTHROW(e_step(p, data));

  GmmParams q = full_params();
  q.means[0] = Vector::Constant(2, std::numeric_limits<double>::quiet_NaN());
  q.means[1] = Vector::Constant(2, std::numeric_limits<double>::quiet_NaN());
  try {
    e_step(q, data);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.index == 0);  // first point already fails
  }
}
