#pragma once

#include "otfs/episodes.hpp"
#include "otfs/loss.hpp"
#include "otfs/memory.hpp"

#include <optional>
#include <utility>

namespace otfs {

/// The whole backbone/projector/predictor stack collapsed to one affine map.
struct LinearEncoder {
  Matrix weight;   // d_in x d_out
  RowVector bias;  // d_out

  Matrix encode(const Matrix& x) const;
  static LinearEncoder init(Index d_in, Index d_out, std::uint64_t seed);
};

struct TrainConfig {
  Index batch = 32;  // B; the two views make 2B rows per step
  int epochs = 50;
  double learning_rate = 0.1;
  double teacher_momentum = 0.99;  // m
  double mask_ratio = 0.3;         // rho
  double noise_std = 0.1;
  Index encoder_dim = 16;
  LossConfig loss;
  DyceConfig dyce;
  // Memory-coupling transport. Equipartitioning over outlying prototypes is a
  // much harder instance than generic OT, so the default regularization is
  // softer and the iteration budget larger than the solver's own defaults.
  SinkhornConfig sinkhorn{/*epsilon=*/0.15, /*max_iterations=*/50000, /*tolerance=*/1e-6};
  std::uint64_t seed = 0;

  void validate() const;
};

/// One corrupted view: the teacher sees input + noise, the student the same
/// with a floor(rho * d)-coordinate zero-mask per row.
struct View {
  Matrix teacher;
  Matrix student;
};

/// Every teacher parameter moves to m * teacher + (1 - m) * student.
LinearEncoder ema_update(const LinearEncoder& teacher, const LinearEncoder& student, double m);

std::pair<View, View> two_views(const Matrix& batch, double mask_ratio, double noise_std,
                                std::mt19937_64& rng);

struct StepResult {
  double loss = 0.0;
  Index enhanced_rows = 0;  // 2B before the enhancement gate opens, 2B(k+1) after
  std::optional<double> purity;
};

/// One pretraining step: forward both views through both encoders, run the
/// memory (fill, bootstrap once full, enhance when epoch >= epoch_threshold,
/// equipartitioned update), apply the contrastive loss, descend the student
/// and EMA the teacher. Neighbor rows and teacher rows carry no gradient.
StepResult train_step(LinearEncoder& student, LinearEncoder& teacher, MemoryState& memory,
                      const Matrix& batch, const std::vector<int>& batch_labels, int epoch,
                      const TrainConfig& cfg, std::mt19937_64& rng);

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> dbi;
  std::optional<double> mean_purity;
};

struct PretrainResult {
  std::vector<EpochRecord> trace;
  LinearEncoder student;
  LinearEncoder teacher;
  MemoryState memory;
};

/// Full run over seeded epoch streams; the trace is a pure function of
/// (cfg.seed, data).
PretrainResult run_pretraining(const TrainConfig& cfg, const LabeledEmbeddingSet& data);

}  // namespace otfs
