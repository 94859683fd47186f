#include "otfs/opta.hpp"

#include "otfs/episodes.hpp"
#include "otfs/rng.hpp"

#include <doctest.h>

#include <random>

using namespace otfs;

namespace {

Matrix gaussian_rows(Index rows, Index cols, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = std_dev * unit(rng);
  }
  return m;
}

// Barycentric weights of the transported prototypes: recompute the coupling
// the same way the pass does and hand the weight matrix to the caller.
Matrix pass_weights(const PrototypeSet& protos, const Matrix& queries, const OptaConfig& cfg) {
  const CostMatrix cost = pairwise_cost(queries, protos.values, Metric::SquaredEuclidean);
  const TransportPlan plan =
      sinkhorn(cost, Marginals::uniform(queries.rows(), protos.ways()), cfg.sinkhorn);
  Matrix normalized = row_normalize(plan);
  const Vector mass = normalized.colwise().sum();
  return normalized.array().rowwise() / mass.transpose().array();  // columns sum to 1
}

}  // namespace

TEST_CASE("class_prototypes averages per class in canonical order") {
  Matrix support(2, 2);
  support << 0, 0, 2, 2;
  const PrototypeSet one = class_prototypes(support, {4, 4});
  CHECK(one.values.rows() == 1);
  CHECK(one.values(0, 0) == doctest::Approx(1.0));
  CHECK(one.class_order == std::vector<int>{4});

  Matrix single(1, 2);
  single << 3, 5;
  const PrototypeSet k1 = class_prototypes(single, {7});
  CHECK(k1.values.row(0) == single.row(0));

  Matrix shuffled(4, 1);
  shuffled << 10, 0, 11, 1;
  const PrototypeSet a = class_prototypes(shuffled, {2, 1, 2, 1});
  Matrix ordered(4, 1);
  ordered << 1, 0, 11, 10;
  const PrototypeSet b = class_prototypes(ordered, {1, 1, 2, 2});
  CHECK(a.class_order == b.class_order);
  CHECK(a.values == b.values);
}

TEST_CASE("class_prototypes rejects empty and mismatched input") {
  CHECK_THROWS_AS(class_prototypes(Matrix(0, 2), {}), ShapeError);
  Matrix rows(2, 2);
  rows.setZero();
  CHECK_THROWS_AS(class_prototypes(rows, {1}), ShapeError);
}

TEST_CASE("opta_pass is a near fixed point when queries sit on the prototypes") {
  Matrix protos_values(2, 2);
  protos_values << 0, 0, 20, 0;
  PrototypeSet protos{protos_values, {0, 1}};

  Matrix queries(6, 2);
  queries << 0, 0.01, 0, -0.01, 0.01, 0, 20, 0.01, 20, -0.01, 19.99, 0;
  OptaConfig cfg;
  cfg.sinkhorn.epsilon = 1e-3;
  cfg.sinkhorn.max_iterations = 50000;
  const PrototypeSet moved = opta_pass(protos, queries, cfg);
  CHECK((moved.values - protos.values).cwiseAbs().maxCoeff() <= 1e-2);
}

TEST_CASE("transported prototypes are convex combinations of queries") {
  std::mt19937_64 rng(61);
  OptaConfig cfg;
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix queries = gaussian_rows(12, 3, 1.0, rng);
    Matrix proto_values = gaussian_rows(3, 3, 1.0, rng);
    PrototypeSet protos{proto_values, {0, 1, 2}};

    const Matrix weights = pass_weights(protos, queries, cfg);
    CHECK((weights.array() >= 0).all());
    for (Index j = 0; j < 3; ++j) {
      CHECK(std::abs(weights.col(j).sum() - 1.0) <= 1e-9);
    }
    const PrototypeSet moved = opta_pass(protos, queries, cfg);
    CHECK((moved.values - weights.transpose() * queries).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("one pass pulls biased prototypes toward the true class means") {
  // Two far-apart classes; supports drawn from a subpopulation shifted by one
  // within-class sigma. The transported prototype must land closer to the
  // true mean than the raw prototype does, for both classes.
  std::mt19937_64 rng(67);
  const double sigma = 1.0;
  Matrix centers(2, 8);
  centers.setZero();
  centers(0, 0) = 0.0;
  centers(1, 0) = 8.0;  // 8 sigma apart

  const int queries_per_class = 30;
  Matrix queries(2 * queries_per_class, 8);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < queries_per_class; ++i) {
      queries.row(c * queries_per_class + i) =
          centers.row(c) + gaussian_rows(1, 8, sigma, rng).row(0);
    }
  }
  RowVector shift = RowVector::Zero(8);
  shift[1] = sigma;  // support subpopulation bias
  Matrix support(2, 8);
  for (int c = 0; c < 2; ++c) {
    support.row(c) = centers.row(c) + shift + gaussian_rows(1, 8, sigma, rng).row(0);
  }

  const PrototypeSet raw = class_prototypes(support, {0, 1});
  const PrototypeSet moved = opta_pass(raw, queries, {});
  for (int c = 0; c < 2; ++c) {
    const double before = (raw.values.row(c) - centers.row(c)).norm();
    const double after = (moved.values.row(c) - centers.row(c)).norm();
    CHECK(after < before);
  }
}

TEST_CASE("opta_pass validates its preconditions") {
  Matrix proto_values(2, 2);
  proto_values << 0, 0, 1, 1;
  PrototypeSet protos{proto_values, {0, 1}};

  Matrix two_queries(2, 2);
  two_queries << 0, 0, 1, 1;
  CHECK_THROWS_AS(opta_pass(protos, two_queries, {}), PreconditionError);

  PrototypeSet one_class{proto_values.topRows(1), {0}};
  Matrix queries(3, 2);
  queries << 0, 0, 1, 1, 2, 2;
  CHECK_THROWS_AS(opta_pass(one_class, queries, {}), PreconditionError);

  Matrix identical = Matrix::Ones(4, 2);
  CHECK_THROWS_AS(opta_pass(protos, identical, {}), DegeneratePlanError);
}

TEST_CASE("opta_iterate composes passes and is the identity at zero") {
  std::mt19937_64 rng(71);
  const Matrix queries = gaussian_rows(10, 4, 1.0, rng);
  PrototypeSet protos{gaussian_rows(3, 4, 1.0, rng), {0, 1, 2}};

  OptaConfig zero;
  zero.passes = 0;
  const PrototypeSet same = opta_iterate(protos, queries, zero);
  CHECK(same.values == protos.values);

  OptaConfig one;
  one.passes = 1;
  CHECK(opta_iterate(protos, queries, one).values == opta_pass(protos, queries, one).values);

  OptaConfig five;
  five.passes = 5;
  CHECK_NOTHROW(opta_iterate(protos, queries, five));

  OptaConfig six;
  six.passes = 6;
  CHECK_THROWS_AS(opta_iterate(protos, queries, six), ConfigError);
}

TEST_CASE("opta_pass is equivariant under class permutations") {
  std::mt19937_64 rng(73);
  const Matrix queries = gaussian_rows(9, 3, 1.0, rng);
  const Matrix protos = gaussian_rows(3, 3, 1.0, rng);
  PrototypeSet forward{protos, {0, 1, 2}};
  Matrix reversed_values(3, 3);
  reversed_values << protos.row(2), protos.row(1), protos.row(0);
  PrototypeSet reversed{reversed_values, {2, 1, 0}};

  const PrototypeSet a = opta_pass(forward, queries, {});
  const PrototypeSet b = opta_pass(reversed, queries, {});
  for (Index c = 0; c < 3; ++c) {
    CHECK((a.values.row(c) - b.values.row(2 - c)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("the literal plan-transpose form stays available") {
  std::mt19937_64 rng(79);
  const Matrix queries = gaussian_rows(10, 3, 1.0, rng);
  PrototypeSet protos{gaussian_rows(2, 3, 1.0, rng), {0, 1}};
  OptaConfig literal;
  literal.barycentric = false;
  const PrototypeSet a = opta_pass(protos, queries, {});
  const PrototypeSet b = opta_pass(protos, queries, literal);
  CHECK(a.values != b.values);
}

TEST_CASE("fit_logistic separates well-separated prototypes") {
  Matrix proto_values(2, 2);
  proto_values << -5, 0, 5, 0;
  PrototypeSet protos{proto_values, {3, 9}};
  const LogisticClassifier model = fit_logistic(protos, 1e-3, 500, 0.1);
  CHECK(predict(model, proto_values) == std::vector<int>{3, 9});

  Matrix near_first(1, 2);
  near_first << -4.5, 0.3;
  CHECK(predict(model, near_first) == std::vector<int>{3});
}

TEST_CASE("logistic predictions agree with nearest prototype on separable episodes") {
  std::mt19937_64 rng(83);
  Matrix centers = 10.0 * gaussian_rows(5, 6, 1.0, rng);
  PrototypeSet protos{centers, {0, 1, 2, 3, 4}};
  const LogisticClassifier model = fit_logistic(protos, 1e-3, 500, 0.1);

  int agree = 0;
  const int total = 400;
  for (int i = 0; i < total; ++i) {
    std::uniform_int_distribution<int> pick(0, 4);
    const int c = pick(rng);
    Matrix query = centers.row(c) + 0.5 * gaussian_rows(1, 6, 1.0, rng);
    Index nearest = 0;
    double best = (query.row(0) - centers.row(0)).squaredNorm();
    for (Index j = 1; j < 5; ++j) {
      const double d = (query.row(0) - centers.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        nearest = j;
      }
    }
    if (predict(model, query) == std::vector<int>{static_cast<int>(nearest)}) ++agree;
  }
  CHECK(agree >= static_cast<int>(0.99 * total));
}

TEST_CASE("predict breaks logit ties toward the lowest class index") {
  LogisticClassifier model;
  model.weights = Matrix::Zero(2, 3);  // all logits identical
  model.bias = RowVector::Zero(3);
  model.class_order = {5, 6, 7};
  Matrix query(2, 2);
  query << 1, 1, -3, 2;
  CHECK(predict(model, query) == std::vector<int>{5, 5});

  Matrix wrong_dim(1, 3);
  wrong_dim.setZero();
  CHECK_THROWS_AS(predict(model, wrong_dim), ShapeError);
}
