#include "otfs/ot.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace otfs;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

}  // namespace

TEST_CASE("pairwise_cost on identical points is zero") {
  Matrix a(1, 2), b(1, 2);
  a << 0, 0;
  b << 0, 0;
  CHECK(pairwise_cost(a, b, Metric::SquaredEuclidean).values(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("pairwise_cost 3-4-5 squared euclidean") {
  Matrix a(1, 2), b(1, 2);
  a << 0, 0;
  b << 3, 4;
  CHECK(pairwise_cost(a, b, Metric::SquaredEuclidean).values(0, 0) == doctest::Approx(25.0));
  CHECK(pairwise_cost(a, b, Metric::Euclidean).values(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("pairwise_cost negative cosine of orthogonal vectors") {
  Matrix a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  CHECK(pairwise_cost(a, b, Metric::NegativeCosine).values(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("metric tags round-trip through their names") {
  for (Metric metric : {Metric::SquaredEuclidean, Metric::Euclidean, Metric::NegativeCosine}) {
    CHECK(metric_from_name(metric_name(metric)) == metric);
  }
  CHECK_THROWS_AS(metric_from_name("manhattan"), ConfigError);
}

TEST_CASE("pairwise_cost rejects mismatched dimensions and bad rows") {
  Matrix a(1, 2), b(1, 3);
  a.setZero();
  b.setZero();
  CHECK_THROWS_AS(pairwise_cost(a, b, Metric::SquaredEuclidean), ShapeError);
  Matrix z(1, 2), w(1, 2);
  z << 0, 0;
  w << 1, 1;
  CHECK_THROWS_AS(pairwise_cost(z, w, Metric::NegativeCosine), NumericalError);
}

TEST_CASE("sinkhorn 1x1 has the only feasible plan") {
  CostMatrix cost{Matrix::Zero(1, 1), Metric::SquaredEuclidean};
  const TransportPlan plan = sinkhorn(cost, Marginals::uniform(1, 1), {});
  CHECK(plan.values(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("sinkhorn constant cost with uniform marginals is uniform") {
  CostMatrix cost{Matrix::Constant(2, 2, 3.5), Metric::SquaredEuclidean};
  const TransportPlan plan = sinkhorn(cost, Marginals::uniform(2, 2), {});
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 2; ++j) CHECK(plan.values(i, j) == doctest::Approx(0.25));
  }
}

TEST_CASE("sinkhorn near the exact assignment on the zero-diagonal 3x3") {
  Matrix d(3, 3);
  d << 0, 2, 2, 2, 0, 2, 2, 2, 0;
  CostMatrix cost{d, Metric::SquaredEuclidean};
  SinkhornConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.max_iterations = 20000;
  const TransportPlan plan = sinkhorn(cost, Marginals::uniform(3, 3), cfg);
  const double exact = oracle::exact_assignment_cost(d);
  CHECK(exact == doctest::Approx(0.0));
  CHECK(transport_cost(plan, cost) <= exact + 0.01);
}

TEST_CASE("epsilon limit: within 1% of brute-force assignment for n <= 4") {
  std::mt19937_64 rng(7);
  SinkhornConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.max_iterations = 200000;
  cfg.tolerance = 1e-5;  // near-tied assignments make the last digits very slow
  for (Index n = 2; n <= 4; ++n) {
    for (int rep = 0; rep < 5; ++rep) {
      CostMatrix cost{random_matrix(n, n, rng), Metric::SquaredEuclidean};
      const TransportPlan plan = sinkhorn(cost, Marginals::uniform(n, n), cfg);
      const double exact = oracle::exact_assignment_cost(cost.values);
      const double got = transport_cost(plan, cost);
      CHECK(std::abs(got - exact) <= std::max(0.01 * exact, 1e-4));
    }
  }
}

TEST_CASE("sinkhorn feasibility and nonnegativity on random rectangles") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    CostMatrix cost{random_matrix(13, 7, rng), Metric::SquaredEuclidean};
    const Marginals marginals = Marginals::uniform(13, 7);
    const TransportPlan plan = sinkhorn(cost, marginals, {});
    CHECK((plan.values.array() >= 0).all());
    CHECK((plan.values.rowwise().sum() - marginals.r).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((plan.values.colwise().sum().transpose() - marginals.c).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(plan.max_marginal_violation <= 1e-6);
  }
}

TEST_CASE("sinkhorn is deterministic bit for bit") {
  std::mt19937_64 rng(3);
  CostMatrix cost{random_matrix(6, 9, rng), Metric::SquaredEuclidean};
  const TransportPlan a = sinkhorn(cost, Marginals::uniform(6, 9), {});
  const TransportPlan b = sinkhorn(cost, Marginals::uniform(6, 9), {});
  CHECK(a.values == b.values);
  CHECK(a.iterations_used == b.iterations_used);
}

TEST_CASE("sinkhorn is equivariant under row permutations") {
  std::mt19937_64 rng(5);
  CostMatrix cost{random_matrix(5, 4, rng), Metric::SquaredEuclidean};
  Marginals marginals;
  marginals.r = Vector::LinSpaced(5, 1.0, 5.0);
  marginals.r /= marginals.r.sum();
  marginals.c = Vector::Constant(4, 0.25);
  const TransportPlan base = sinkhorn(cost, marginals, {});

  std::vector<Index> perm = {3, 0, 4, 1, 2};
  CostMatrix permuted_cost{Matrix(5, 4), cost.metric};
  Marginals permuted = marginals;
  for (Index i = 0; i < 5; ++i) {
    permuted_cost.values.row(i) = cost.values.row(perm[static_cast<std::size_t>(i)]);
    permuted.r[i] = marginals.r[perm[static_cast<std::size_t>(i)]];
  }
  const TransportPlan moved = sinkhorn(permuted_cost, permuted, {});
  for (Index i = 0; i < 5; ++i) {
    CHECK((moved.values.row(i) - base.values.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() <=
          1e-12);
  }
}

TEST_CASE("sinkhorn respects zero row marginals") {
  std::mt19937_64 rng(13);
  CostMatrix cost{random_matrix(3, 3, rng), Metric::SquaredEuclidean};
  Marginals marginals;
  marginals.r = Vector(3);
  marginals.r << 0.5, 0.0, 0.5;
  marginals.c = Vector::Constant(3, 1.0 / 3.0);
  const TransportPlan plan = sinkhorn(cost, marginals, {});
  CHECK(plan.values.row(1).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("sinkhorn reports non-convergence with diagnostics") {
  std::mt19937_64 rng(17);
  CostMatrix cost{random_matrix(8, 8, rng), Metric::SquaredEuclidean};
  SinkhornConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.max_iterations = 2;
  cfg.tolerance = 1e-12;
  try {
    sinkhorn(cost, Marginals::uniform(8, 8), cfg);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& err) {
    CHECK(err.iterations == 2);
    CHECK(err.best_violation > 0);
  }
}

TEST_CASE("sinkhorn validates configuration and marginals") {
  CostMatrix cost{Matrix::Zero(2, 2), Metric::SquaredEuclidean};
  SinkhornConfig bad;
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(sinkhorn(cost, Marginals::uniform(2, 2), bad), ConfigError);

  Marginals off;
  off.r = Vector::Constant(2, 0.6);  // sums to 1.2
  off.c = Vector::Constant(2, 0.5);
  CHECK_THROWS_AS(sinkhorn(cost, off, {}), NumericalError);

  CHECK_THROWS_AS(sinkhorn(cost, Marginals::uniform(3, 2), {}), ShapeError);
}

TEST_CASE("transport_cost arithmetic examples") {
  TransportPlan plan;
  plan.values = Matrix::Constant(2, 2, 0.25);
  Matrix d(2, 2);
  d << 0, 1, 1, 0;
  CHECK(transport_cost(plan, {d, Metric::SquaredEuclidean}) == doctest::Approx(0.5));

  TransportPlan diag;
  diag.values = Matrix::Zero(2, 2);
  diag.values(0, 0) = 0.5;
  diag.values(1, 1) = 0.5;
  CHECK(transport_cost(diag, {d, Metric::SquaredEuclidean}) == doctest::Approx(0.0));
}

TEST_CASE("transport_cost equals the double-loop oracle") {
  std::mt19937_64 rng(23);
  TransportPlan plan;
  plan.values = random_matrix(4, 5, rng);
  const CostMatrix cost{random_matrix(4, 5, rng), Metric::SquaredEuclidean};
  CHECK(transport_cost(plan, cost) ==
        doctest::Approx(oracle::double_loop_dot(plan.values, cost.values)).epsilon(1e-12));
  TransportPlan small;
  small.values = random_matrix(3, 5, rng);
  CHECK_THROWS_AS(transport_cost(small, cost), ShapeError);
}

TEST_CASE("row_normalize keeps stochastic rows and proportions") {
  TransportPlan already;
  already.values = Matrix(2, 2);
  already.values << 0.5, 0.5, 0.25, 0.75;
  CHECK(row_normalize(already) == already.values);

  TransportPlan plan;
  plan.values = Matrix(2, 2);
  plan.values << 0.2, 0.2, 0.1, 0.3;
  Matrix expected(2, 2);
  expected << 0.5, 0.5, 0.25, 0.75;
  CHECK((row_normalize(plan) - expected).cwiseAbs().maxCoeff() <= 1e-15);

  TransportPlan degenerate;
  degenerate.values = Matrix::Zero(2, 2);
  degenerate.values(0, 0) = 1.0;
  CHECK_THROWS_AS(row_normalize(degenerate), DegeneratePlanError);
}
