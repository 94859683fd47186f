#pragma once

#include "otfs/ot.hpp"

#include <vector>

namespace otfs {

/// One prototype row per class, rows in canonical (sorted-label) order.
struct PrototypeSet {
  Matrix values;  // N x d
  std::vector<int> class_order;

  Index ways() const { return values.rows(); }
};

struct OptaConfig {
  int passes = 1;  // delta
  // Near-collapsed query sets make the coupling slow, so the inner iteration
  // budget is far above the solver default.
  SinkhornConfig sinkhorn{/*epsilon=*/0.05, /*max_iterations=*/50000, /*tolerance=*/1e-6};
  bool barycentric = true;  // renormalize per column so each prototype is a true
                            // barycenter of queries; false keeps the literal
                            // plan-transpose form for comparison
  int max_passes = 5;

  void validate() const;
};

struct LogisticRegressionParams {
  double reg = 1e-3;
  int iterations = 500;
  double learning_rate = 0.1;
};

/// Multinomial logistic model fit on the prototype rows (one sample per
/// class). predict() maps back to canonical class labels.
struct LogisticClassifier {
  Matrix weights;  // d x N
  RowVector bias;  // N
  std::vector<int> class_order;
};

/// Class-mean prototypes of a labeled support set.
PrototypeSet class_prototypes(const Matrix& support_embeddings,
                              const std::vector<int>& support_labels);

/// One distribution-alignment pass: couples queries to prototypes with
/// uniform marginals, row-normalizes the plan, and replaces each prototype by
/// its (barycentric) combination of query embeddings. Its output lives in the
/// convex hull of the queries by construction.
PrototypeSet opta_pass(const PrototypeSet& protos, const Matrix& queries, const OptaConfig& cfg);

/// cfg.passes consecutive passes; 0 passes returns the input unchanged.
PrototypeSet opta_iterate(const PrototypeSet& protos, const Matrix& queries,
                          const OptaConfig& cfg);

/// Full-batch gradient descent from zero init; deterministic given inputs.
LogisticClassifier fit_logistic(const PrototypeSet& protos, double reg, int iterations,
                                double learning_rate);

/// Argmax class per query, ties toward the lowest class index.
std::vector<int> predict(const LogisticClassifier& classifier, const Matrix& queries);

}  // namespace otfs
