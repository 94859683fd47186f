#pragma once

#include "otfs/types.hpp"

#include <vector>

namespace otfs {

/// Positive counterpart of every row in an enhanced batch laid out as
/// [view-a originals, view-b originals, neighbor blocks in source order].
/// Originals pair across views (i <-> i+B); each neighbor row points at the
/// counterpart-view original of its source row.
struct PositivePairMap {
  std::vector<Index> pair;
  Index batch_size = 0;  // B
  Index neighbors = 0;   // k

  Index rows() const { return static_cast<Index>(pair.size()); }
  Index originals() const { return 2 * batch_size; }
};

struct LossConfig {
  double lambda = 0.1;  // negative-term weight
  double tau = 2.0;     // temperature
  bool positives_originals_only = false;  // drop neighbor rows from the positive term

  void validate() const;
};

PositivePairMap build_pair_map(Index batch_size, Index neighbors);

/// Symmetric contrastive loss over student/teacher batches:
///   (1/L) sum over rows r of d[z_s(pair[r]), z_t(r)]
///     - lambda * log((1/L) sum_i sum_{j != i, pair[i]} exp(d[z_s(i), z_s(j)] / tau))
/// with d the negative cosine similarity and the teacher held constant. For
/// original-only batches (k = 0) the first sum is exactly the paired form
/// (1/L) sum_{i<L/2} (d[z_s(i), z_t(i+)] + d[z_s(i+), z_t(i)]).
double loss_value(const Matrix& z_s, const Matrix& z_t, const PositivePairMap& pairs,
                  const LossConfig& cfg);

/// Exact analytic gradient of loss_value with respect to the student rows,
/// through the cosine normalization and the log-sum term.
Matrix loss_grad_student(const Matrix& z_s, const Matrix& z_t, const PositivePairMap& pairs,
                         const LossConfig& cfg);

}  // namespace otfs
