#include "otfs/ot.hpp"

#include <cmath>
#include <limits>

namespace otfs {

namespace {

constexpr double kMarginalSumTol = 1e-9;

// Row-wise log-sum-exp of A, tolerant of -inf entries (rows that carry no
// mass stay at -inf instead of producing NaN).
Vector logsumexp_rows(const Matrix& a) {
  const Index n = a.rows();
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    const double mx = a.row(i).maxCoeff();
    if (!std::isfinite(mx)) {
      out[i] = mx;  // all -inf (or a stray +inf caught by the caller)
      continue;
    }
    out[i] = mx + std::log((a.row(i).array() - mx).exp().sum());
  }
  return out;
}

}  // namespace

const char* metric_name(Metric metric) {
  switch (metric) {
    case Metric::SquaredEuclidean: return "squared-euclidean";
    case Metric::Euclidean: return "euclidean";
    case Metric::NegativeCosine: return "negative-cosine";
  }
  return "unknown";
}

Metric metric_from_name(const std::string& name) {
  if (name == "squared-euclidean") return Metric::SquaredEuclidean;
  if (name == "euclidean") return Metric::Euclidean;
  if (name == "negative-cosine") return Metric::NegativeCosine;
  throw ConfigError("unknown metric: " + name);
}

Marginals Marginals::uniform(Index n, Index m) {
  Marginals out;
  out.r = Vector::Constant(n, 1.0 / static_cast<double>(n));
  out.c = Vector::Constant(m, 1.0 / static_cast<double>(m));
  return out;
}

void Marginals::validate() const {
  if (r.size() < 1 || c.size() < 1) throw ShapeError("marginals must be non-empty");
  if ((r.array() < 0).any() || (c.array() < 0).any())
    throw NumericalError("marginals must be nonnegative");
  if (std::abs(r.sum() - 1.0) > kMarginalSumTol)
    throw NumericalError("row marginal does not sum to 1");
  if (std::abs(c.sum() - 1.0) > kMarginalSumTol)
    throw NumericalError("column marginal does not sum to 1");
}

void SinkhornConfig::validate() const {
  if (!(epsilon > 0)) throw ConfigError("sinkhorn epsilon must be > 0");
  if (max_iterations < 1) throw ConfigError("sinkhorn max_iterations must be >= 1");
  if (!(tolerance > 0)) throw ConfigError("sinkhorn tolerance must be > 0");
}

CostMatrix pairwise_cost(const Matrix& a, const Matrix& b, Metric metric) {
  if (a.cols() != b.cols())
    throw ShapeError("pairwise_cost: dimension mismatch (" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.cols()) + ")");
  if (a.rows() < 1 || b.rows() < 1) throw ShapeError("pairwise_cost: empty point set");
  if (!a.allFinite() || !b.allFinite())
    throw NumericalError("pairwise_cost: non-finite input");

  CostMatrix out;
  out.metric = metric;
  switch (metric) {
    case Metric::SquaredEuclidean:
    case Metric::Euclidean: {
      const Vector an = a.rowwise().squaredNorm();
      const Vector bn = b.rowwise().squaredNorm();
      Matrix d = -2.0 * (a * b.transpose());
      d.colwise() += an;
      d.rowwise() += bn.transpose();
      d = d.cwiseMax(0.0);  // clamp the roundoff negatives
      out.values = metric == Metric::Euclidean ? d.array().sqrt().matrix() : d;
      break;
    }
    case Metric::NegativeCosine: {
      const Vector an = a.rowwise().norm();
      const Vector bn = b.rowwise().norm();
      if ((an.array() == 0).any() || (bn.array() == 0).any())
        throw NumericalError("pairwise_cost: zero-norm row under cosine metric");
      const Matrix a_hat = a.array().colwise() / an.array();
      const Matrix b_hat = b.array().colwise() / bn.array();
      out.values = -(a_hat * b_hat.transpose());
      break;
    }
  }
  return out;
}

TransportPlan sinkhorn(const CostMatrix& cost, const Marginals& marginals,
                       const SinkhornConfig& cfg) {
  cfg.validate();
  marginals.validate();
  const Matrix& d = cost.values;
  const Index n = d.rows();
  const Index m = d.cols();
  if (n < 1 || m < 1) throw ShapeError("sinkhorn: empty cost matrix");
  if (marginals.r.size() != n || marginals.c.size() != m)
    throw ShapeError("sinkhorn: cost shape does not match marginal lengths");
  if (!d.allFinite()) throw NumericalError("sinkhorn: non-finite cost");

  TransportPlan plan;
  plan.cost_min = d.minCoeff();
  plan.cost_range = d.maxCoeff() - plan.cost_min;
  const Matrix c = plan.cost_range > 0
                       ? Matrix(((d.array() - plan.cost_min) / plan.cost_range).matrix())
                       : Matrix(Matrix::Zero(n, m));

  const double eps = cfg.epsilon;
  const Vector log_r = marginals.r.array().log();  // -inf where the mass is zero
  const Vector log_c = marginals.c.array().log();
  Vector f = Vector::Zero(n);
  Vector g = Vector::Zero(m);

  double best_violation = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    // f_i <- eps * (log r_i - lse_j((g_j - C_ij) / eps))
    f = eps * (log_r - logsumexp_rows(((-c).rowwise() + g.transpose()) / eps));
    // g_j <- eps * (log c_j - lse_i((f_i - C_ij) / eps))
    const Matrix scaled = ((-c).colwise() + f) / eps;
    g = eps * (log_c - logsumexp_rows(scaled.transpose()));

    if (f.hasNaN() || g.hasNaN())
      throw NumericalError("sinkhorn: scaling potentials became non-finite");

    plan.values = ((scaled.rowwise() + (g / eps).transpose()).array().exp()).matrix();
    const double row_violation =
        (plan.values.rowwise().sum() - marginals.r).cwiseAbs().maxCoeff();
    const double col_violation =
        (plan.values.colwise().sum().transpose() - marginals.c).cwiseAbs().maxCoeff();
    const double violation = std::max(row_violation, col_violation);
    best_violation = std::min(best_violation, violation);

    if (violation <= cfg.tolerance) {
      plan.iterations_used = it;
      plan.max_marginal_violation = violation;
      return plan;
    }
  }
  throw ConvergenceError("sinkhorn: no convergence within " +
                             std::to_string(cfg.max_iterations) +
                             " iterations (best violation " +
                             std::to_string(best_violation) + ")",
                         cfg.max_iterations, best_violation);
}

double transport_cost(const TransportPlan& plan, const CostMatrix& cost) {
  if (plan.values.rows() != cost.rows() || plan.values.cols() != cost.cols())
    throw ShapeError("transport_cost: plan and cost shapes differ");
  return (plan.values.array() * cost.values.array()).sum();
}

Matrix row_normalize(const TransportPlan& plan) {
  const Vector sums = plan.values.rowwise().sum();
  if ((sums.array() <= 0).any())
    throw DegeneratePlanError("row_normalize: plan has a zero row");
  return plan.values.array().colwise() / sums.array();
}

}  // namespace otfs
