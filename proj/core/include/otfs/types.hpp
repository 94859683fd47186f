#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace otfs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Pairwise distance metrics understood by pairwise_cost().
enum class Metric { SquaredEuclidean, Euclidean, NegativeCosine };

const char* metric_name(Metric metric);
Metric metric_from_name(const std::string& name);

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched matrix/vector dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Sinkhorn ran out of iterations; carries the best iterate's diagnostics.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double best_violation)
      : Error(what), iterations(iterations), best_violation(best_violation) {}
  int iterations;
  double best_violation;
};

/// Non-finite values where finite ones are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A transport plan with a zero row (cannot be row-normalized).
class DegeneratePlanError : public Error {
 public:
  using Error::Error;
};

/// Clustering asked for more clusters than distinct points.
class DegenerateClusteringError : public Error {
 public:
  using Error::Error;
};

/// An operation was called in a state that violates its preconditions.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A requested metric is undefined for the given state.
class MetricUndefinedError : public Error {
 public:
  using Error::Error;
};

/// Dataset too small for the requested sampling.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Malformed embedding file; byte_offset points at the offending position.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset(byte_offset) {}
  std::size_t byte_offset;
};

/// Invalid configuration value or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace otfs
