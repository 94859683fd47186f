#include "otfs/loss.hpp"

#include <cmath>

namespace otfs {

namespace {

struct Normalized {
  Matrix rows;   // unit rows
  Vector norms;  // original row norms
};

Normalized normalize_or_throw(const Matrix& z, const char* which) {
  Normalized out;
  out.norms = z.rowwise().norm();
  if ((out.norms.array() == 0).any())
    throw NumericalError(std::string("loss: zero-norm row in ") + which);
  if (!z.allFinite()) throw NumericalError(std::string("loss: non-finite ") + which);
  out.rows = z.array().colwise() / out.norms.array();
  return out;
}

void check_shapes(const Matrix& z_s, const Matrix& z_t, const PositivePairMap& pairs,
                  const LossConfig& cfg) {
  cfg.validate();
  if (z_s.rows() != z_t.rows() || z_s.cols() != z_t.cols())
    throw ShapeError("loss: student and teacher shapes differ");
  if (z_s.rows() != pairs.rows()) throw ShapeError("loss: pair map does not match batch rows");
  if (cfg.lambda > 0 && z_s.rows() < 4)
    throw PreconditionError("loss: negative sum is empty for L < 4");
}

// Negative-term weights: W(i, j) = exp(-cos(i, j) / tau) over the admissible
// ordered pairs j != i, j != pair[i]; zero elsewhere.
Matrix negative_weights(const Matrix& cosines, const PositivePairMap& pairs, double tau) {
  Matrix w = (-cosines / tau).array().exp();
  for (Index i = 0; i < w.rows(); ++i) {
    w(i, i) = 0.0;
    w(i, pairs.pair[static_cast<std::size_t>(i)]) = 0.0;
  }
  return w;
}

}  // namespace

void LossConfig::validate() const {
  if (!(tau > 0)) throw ConfigError("loss tau must be > 0");
  if (lambda < 0) throw ConfigError("loss lambda must be >= 0");
}

PositivePairMap build_pair_map(Index batch_size, Index neighbors) {
  if (batch_size < 1) throw ConfigError("build_pair_map: batch size must be >= 1");
  if (neighbors < 0) throw ConfigError("build_pair_map: neighbors must be >= 0");
  const Index b = batch_size;
  const Index k = neighbors;
  const Index rows = 2 * b * (k + 1);

  PositivePairMap map;
  map.batch_size = b;
  map.neighbors = k;
  map.pair.resize(static_cast<std::size_t>(rows));
  for (Index i = 0; i < b; ++i) {
    map.pair[static_cast<std::size_t>(i)] = i + b;
    map.pair[static_cast<std::size_t>(i + b)] = i;
  }
  for (Index source = 0; source < 2 * b; ++source) {
    const Index counterpart = source < b ? source + b : source - b;
    for (Index j = 0; j < k; ++j) {
      map.pair[static_cast<std::size_t>(2 * b + source * k + j)] = counterpart;
    }
  }
  return map;
}

double loss_value(const Matrix& z_s, const Matrix& z_t, const PositivePairMap& pairs,
                  const LossConfig& cfg) {
  check_shapes(z_s, z_t, pairs, cfg);
  const Index rows = z_s.rows();
  const Normalized s = normalize_or_throw(z_s, "student batch");
  const Normalized t = normalize_or_throw(z_t, "teacher batch");

  const Index positive_rows = cfg.positives_originals_only ? pairs.originals() : rows;
  double positive = 0.0;
  for (Index r = 0; r < positive_rows; ++r) {
    positive -= s.rows.row(pairs.pair[static_cast<std::size_t>(r)]).dot(t.rows.row(r));
  }
  positive /= static_cast<double>(rows);

  if (cfg.lambda == 0) return positive;

  const Matrix cosines = s.rows * s.rows.transpose();
  const double total = negative_weights(cosines, pairs, cfg.tau).sum();
  return positive - cfg.lambda * std::log(total / static_cast<double>(rows));
}

Matrix loss_grad_student(const Matrix& z_s, const Matrix& z_t, const PositivePairMap& pairs,
                         const LossConfig& cfg) {
  check_shapes(z_s, z_t, pairs, cfg);
  const Index rows = z_s.rows();
  const Normalized s = normalize_or_throw(z_s, "student batch");
  const Normalized t = normalize_or_throw(z_t, "teacher batch");

  Matrix grad = Matrix::Zero(rows, z_s.cols());

  // d(-s_hat.t_hat)/dz = -(t_hat - (s_hat.t_hat) s_hat) / |z|, applied to the
  // student side of each positive pair.
  const Index positive_rows = cfg.positives_originals_only ? pairs.originals() : rows;
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (Index r = 0; r < positive_rows; ++r) {
    const Index a = pairs.pair[static_cast<std::size_t>(r)];
    const double cos_at = s.rows.row(a).dot(t.rows.row(r));
    grad.row(a) -=
        inv_rows / s.norms[a] * (t.rows.row(r) - cos_at * s.rows.row(a));
  }

  if (cfg.lambda == 0) return grad;

  const Matrix cosines = s.rows * s.rows.transpose();
  const Matrix w = negative_weights(cosines, pairs, cfg.tau);
  const double total = w.sum();
  // Both orders of each admissible pair hit row k with the same form, so the
  // combined coefficient matrix is W + W^T.
  const Matrix a = w + w.transpose();
  const Matrix pulled = a * s.rows;                       // sum_j A_kj s_hat_j
  const Vector weighted = (a.array() * cosines.array()).rowwise().sum();
  const double scale = cfg.lambda / (cfg.tau * total);
  const Matrix negative = pulled - weighted.asDiagonal() * s.rows;
  grad += scale * (negative.array().colwise() / s.norms.array()).matrix();
  return grad;
}

}  // namespace otfs
