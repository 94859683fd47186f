#pragma once

#include "otfs/opta.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace otfs {

/// Embeddings with class labels. support_pool, when non-empty, marks rows
/// that belong to the support-generating subpopulation (synthetic sample-bias
/// runs); episodes then draw supports from flagged rows and queries from the
/// rest. Without the mask, supports and queries are disjoint rows of the same
/// pool.
struct LabeledEmbeddingSet {
  Matrix embeddings;
  std::vector<int> labels;
  std::vector<std::uint8_t> support_pool;

  Index rows() const { return embeddings.rows(); }
  Index dim() const { return embeddings.cols(); }
  bool has_labels() const { return !labels.empty(); }
  std::vector<int> distinct_classes() const;
  void validate() const;
};

struct EpisodeSpec {
  int ways = 5;               // N
  int shots = 1;              // K
  int queries_per_class = 15; // Q, must exceed K
  int episode_count = 600;    // E
  std::uint64_t seed = 0;

  void validate() const;
};

struct Episode {
  Matrix support;
  std::vector<int> support_labels;
  Matrix query;
  std::vector<int> query_labels;  // held out, retained for scoring
};

struct SyntheticSpec {
  int classes = 5;
  int dim = 16;
  double center_scale = 1.0;  // inter-center spread
  double within_std = 1.0;    // sigma
  double bias_shift = 0.0;    // support subpopulation offset, in units of sigma
  int samples_per_class = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricsRecord {
  double mean_accuracy = 0.0;
  double ci95_half_width = 0.0;  // 1.96 * sample_std / sqrt(E)
  double std_dev = 0.0;          // the raw sample std is reported alongside
  std::vector<double> per_episode_accuracies;
  std::vector<double> dbi_trace;
};

struct EvalPipeline {
  enum class Classifier { LogReg, Proto };
  int opta_passes = 0;  // 0 disables alignment
  Classifier classifier = Classifier::LogReg;
  OptaConfig opta;
  LogisticRegressionParams logreg;
  bool normalize = true;  // L2-normalize embeddings before prototypes/alignment
};

/// Gaussian class clusters: centers ~ N(0, center_scale^2 I), samples
/// ~ N(center, sigma^2 I). Always generates a same-sized support
/// subpopulation per class, mean-shifted by bias_shift * sigma along a fixed
/// direction (the shift vanishes at bias_shift = 0). Deterministic per seed.
LabeledEmbeddingSet gen_synthetic(const SyntheticSpec& spec);

/// One (N-way, K-shot) episode with Q queries per class, support and query
/// rows disjoint by index.
Episode sample_episode(const LabeledEmbeddingSet& data, const EpisodeSpec& spec,
                       std::mt19937_64& rng);

/// Runs spec.episode_count episodes through the inference pipeline and
/// aggregates accuracy. Per-episode rng streams split deterministically from
/// spec.seed.
MetricsRecord evaluate(const LabeledEmbeddingSet& data, const EpisodeSpec& spec,
                       const EvalPipeline& pipeline);

/// Seeded shuffles partitioned into floor(n/B) batches per epoch, remainder
/// dropped; returns row-index batches for all epochs in order.
std::vector<std::vector<Index>> stream_batches(const LabeledEmbeddingSet& data, Index batch_size,
                                               int epochs, std::mt19937_64& rng);

}  // namespace otfs
