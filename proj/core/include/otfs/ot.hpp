#pragma once

#include "otfs/types.hpp"

namespace otfs {

/// Pairwise cost between two point sets, tagged with the metric it was
/// computed under.
struct CostMatrix {
  Matrix values;  // n x m
  Metric metric = Metric::SquaredEuclidean;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

/// Row and column mass distributions of a transport problem. Both must be
/// nonnegative and sum to 1 (within 1e-9).
struct Marginals {
  Vector r;  // length n
  Vector c;  // length m

  static Marginals uniform(Index n, Index m);
  void validate() const;
};

struct SinkhornConfig {
  double epsilon = 0.05;     // entropic regularization, on costs scaled to [0, 1]
  int max_iterations = 1000;
  double tolerance = 1e-6;   // max allowed L-inf marginal violation

  void validate() const;
};

/// Converged coupling plus solver diagnostics. cost_min / cost_range record
/// the min-max normalization applied to the cost before scaling.
struct TransportPlan {
  Matrix values;  // n x m, nonnegative, marginals within tolerance
  int iterations_used = 0;
  double max_marginal_violation = 0.0;
  double cost_min = 0.0;
  double cost_range = 0.0;
};

/// cost[i][j] = metric(a.row(i), b.row(j)). Throws ShapeError on dimension
/// mismatch, NumericalError on non-finite inputs (or zero-norm rows under the
/// cosine metric).
CostMatrix pairwise_cost(const Matrix& a, const Matrix& b, Metric metric);

/// Entropically regularized optimal transport via Sinkhorn-Knopp. Updates run
/// in the log domain, so small epsilon stays finite. The cost is min-max
/// normalized to [0, 1] internally, which makes epsilon scale-free across
/// metrics; the normalization is recorded in the returned plan. Convergence is
/// the L-inf marginal violation, checked every iteration. Throws
/// ConvergenceError when the iteration budget runs out.
TransportPlan sinkhorn(const CostMatrix& cost, const Marginals& marginals,
                       const SinkhornConfig& cfg);

/// Frobenius inner product <plan, cost>, evaluated on the original cost.
double transport_cost(const TransportPlan& plan, const CostMatrix& cost);

/// Rescales every plan row to sum to 1. Throws DegeneratePlanError on a zero
/// row.
Matrix row_normalize(const TransportPlan& plan);

}  // namespace otfs
