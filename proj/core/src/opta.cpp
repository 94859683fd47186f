#include "otfs/opta.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace otfs {

void OptaConfig::validate() const {
  if (passes < 0) throw ConfigError("opta passes must be >= 0");
  if (passes > max_passes)
    throw ConfigError("opta passes exceeds the cap of " + std::to_string(max_passes));
  sinkhorn.validate();
}

PrototypeSet class_prototypes(const Matrix& support_embeddings,
                              const std::vector<int>& support_labels) {
  if (support_embeddings.rows() < 1) throw ShapeError("class_prototypes: empty support set");
  if (static_cast<Index>(support_labels.size()) != support_embeddings.rows())
    throw ShapeError("class_prototypes: label count does not match support rows");
  if (!support_embeddings.allFinite())
    throw NumericalError("class_prototypes: non-finite support embeddings");

  std::map<int, std::pair<RowVector, double>> sums;  // canonical (sorted) label order
  for (Index i = 0; i < support_embeddings.rows(); ++i) {
    auto [it, fresh] = sums.try_emplace(support_labels[static_cast<std::size_t>(i)],
                                        RowVector::Zero(support_embeddings.cols()), 0.0);
    it->second.first += support_embeddings.row(i);
    it->second.second += 1.0;
  }

  PrototypeSet out;
  out.values = Matrix(static_cast<Index>(sums.size()), support_embeddings.cols());
  Index row = 0;
  for (const auto& [label, acc] : sums) {
    out.class_order.push_back(label);
    out.values.row(row++) = acc.first / acc.second;
  }
  return out;
}

PrototypeSet opta_pass(const PrototypeSet& protos, const Matrix& queries,
                       const OptaConfig& cfg) {
  const Index ways = protos.ways();
  const Index query_count = queries.rows();
  if (ways < 2) throw PreconditionError("opta_pass: needs at least 2 classes");
  if (queries.cols() != protos.values.cols()) throw ShapeError("opta_pass: dimension mismatch");
  if (query_count <= ways)
    throw PreconditionError("opta_pass: needs more queries than classes");
  bool all_identical = true;
  for (Index i = 1; i < query_count && all_identical; ++i) {
    all_identical = queries.row(i) == queries.row(0);
  }
  if (all_identical)
    throw DegeneratePlanError("opta_pass: all queries identical, alignment is degenerate");

  const CostMatrix cost = pairwise_cost(queries, protos.values, Metric::SquaredEuclidean);
  const Marginals marginals = Marginals::uniform(query_count, ways);
  const TransportPlan plan = sinkhorn(cost, marginals, cfg.sinkhorn);
  const Matrix normalized = row_normalize(plan);

  PrototypeSet out;
  out.class_order = protos.class_order;
  if (cfg.barycentric) {
    const Vector column_mass = normalized.colwise().sum();
    if ((column_mass.array() <= 0).any())
      throw DegeneratePlanError("opta_pass: a prototype received no query mass");
    out.values = (normalized.transpose() * queries).array().colwise() / column_mass.array();
  } else {
    out.values = normalized.transpose() * queries;
  }
  return out;
}

PrototypeSet opta_iterate(const PrototypeSet& protos, const Matrix& queries,
                          const OptaConfig& cfg) {
  cfg.validate();
  PrototypeSet current = protos;
  for (int pass = 0; pass < cfg.passes; ++pass) {
    current = opta_pass(current, queries, cfg);
  }
  return current;
}

LogisticClassifier fit_logistic(const PrototypeSet& protos, double reg, int iterations,
                                double learning_rate) {
  const Index ways = protos.ways();
  const Index dim = protos.values.cols();
  if (ways < 2) throw PreconditionError("fit_logistic: needs at least 2 classes");
  if (!protos.values.allFinite()) throw NumericalError("fit_logistic: non-finite prototypes");

  LogisticClassifier model;
  model.class_order = protos.class_order;
  model.weights = Matrix::Zero(dim, ways);
  model.bias = RowVector::Zero(ways);

  const Matrix& x = protos.values;  // one sample per class, labels 0..N-1
  for (int it = 0; it < iterations; ++it) {
    Matrix logits = x * model.weights;
    logits.rowwise() += model.bias;
    const Vector row_max = logits.rowwise().maxCoeff();
    Matrix probs = (logits.colwise() - row_max).array().exp();
    probs.array().colwise() /= probs.rowwise().sum().array();
    probs -= Matrix::Identity(ways, ways);  // subtract one-hot targets

    const Matrix grad_w = x.transpose() * probs / static_cast<double>(ways) + reg * model.weights;
    const RowVector grad_b = probs.colwise().sum() / static_cast<double>(ways);
    model.weights -= learning_rate * grad_w;
    model.bias -= learning_rate * grad_b;
  }
  return model;
}

std::vector<int> predict(const LogisticClassifier& classifier, const Matrix& queries) {
  if (queries.cols() != classifier.weights.rows())
    throw ShapeError("predict: query dimension does not match the classifier");
  Matrix logits = queries * classifier.weights;
  logits.rowwise() += classifier.bias;

  std::vector<int> labels(static_cast<std::size_t>(queries.rows()));
  for (Index i = 0; i < queries.rows(); ++i) {
    Index best = 0;  // strict > keeps ties on the lowest class index
    for (Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    labels[static_cast<std::size_t>(i)] = classifier.class_order[static_cast<std::size_t>(best)];
  }
  return labels;
}

}  // namespace otfs
