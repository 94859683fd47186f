#pragma once

#include "otfs/ot.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace otfs {

enum class DyceVariant { Full, Fifo, KMeans };

const char* variant_name(DyceVariant variant);
DyceVariant variant_from_name(const std::string& name);

struct DyceConfig {
  Index capacity = 8192;        // M
  Index partitions = 200;       // P
  Index neighbors = 3;          // k
  Index epoch_threshold = 20;   // adaptation epochs before the enhancement path activates
  double prototype_ema_rate = 0.9;  // eta
  DyceVariant variant = DyceVariant::Full;
  bool normalize_inputs = true;      // L2-normalize embeddings on entry to the memory
  bool prototype_pure_mean = false;  // recompute prototypes as plain partition means

  void validate() const;  // M >= P >= 1, k >= 0, rates in range
};

/// The clustered memory: up to `capacity` stored embeddings with insertion
/// counters and partition ids, plus one prototype per partition once
/// bootstrapped. Slots are kept in insertion order, so the oldest entries sit
/// at the front.
struct MemoryState {
  Matrix slots;                       // capacity x d; rows [0, filled) are valid
  std::vector<std::uint64_t> births;  // monotone insertion counter per slot
  std::vector<Index> assignments;     // partition id per slot, -1 before bootstrap
  std::vector<int> labels;            // true labels, synthetic diagnostics only (may be empty)
  Matrix prototypes;                  // partitions x d, valid once initialized
  Index filled = 0;
  bool initialized = false;
  std::uint64_t clock = 0;  // total insertions so far

  static MemoryState create(Index capacity, Index dim);
  Index dim() const { return slots.cols(); }
  bool has_labels() const { return !labels.empty(); }
  /// Age of a slot: how many insertions ago it arrived (larger = older).
  std::uint64_t age(Index slot) const { return clock - births.at(static_cast<std::size_t>(slot)); }
};

/// Batch enhanced with mined memory neighbors. Row layout is
/// [batch rows, neighbors of row 0, ..., neighbors of row 2B-1]; the first 2B
/// rows equal the input batch verbatim and L = 2B(k+1).
struct EnhancedBatch {
  Matrix rows;
  std::vector<Index> source_row;   // originating batch row (originals map to themselves)
  std::vector<Index> memory_slot;  // slot a neighbor was copied from, -1 for originals
};

/// What one update did, for diagnostics and bookkeeping oracles.
struct MemoryUpdateReport {
  std::optional<TransportPlan> plan;      // the equipartition coupling (variant full)
  std::vector<Index> assigned_partition;  // per batch row (full / kmeans)
  std::vector<std::uint64_t> evicted_births;
};

/// Appends a batch while the memory is still filling. Throws
/// PreconditionError once full (updates must go through update_memory).
void ingest_fill(MemoryState& state, const Matrix& batch, const DyceConfig& cfg,
                 const std::vector<int>& batch_labels = {});

/// One-time k-means over the full store: seeds prototypes (k-means++ start,
/// Lloyd iterations capped at 100, relative-shift stop 1e-6) and assigns every
/// slot to its nearest centroid.
void bootstrap_partitions(MemoryState& state, const DyceConfig& cfg, std::uint64_t seed);

/// nu_i = argmin_j ||batch_i - prototypes_j||^2, ties toward the lowest index.
std::vector<Index> assign_nearest_prototype(const Matrix& batch, const Matrix& prototypes);

/// Path (i): appends, for each batch row, its k nearest stored embeddings from
/// the partition of its assigned prototype. Falls back to a global top-k when
/// the partition holds fewer than k members; the fifo variant always searches
/// the whole store.
EnhancedBatch topk_enhance(const MemoryState& state, const Matrix& batch, const DyceConfig& cfg);

/// Path (ii): equipartitioned memory update. Variant full couples the batch to
/// the prototypes with Sinkhorn (r uniform over 2B, c uniform over P) and
/// hard-assigns each row to the argmax of its plan row; kmeans assigns by
/// nearest centroid instead; fifo just appends. Touched prototypes move by EMA
/// toward the mean of their newly assigned rows, and the 2B oldest slots are
/// evicted, so filled returns to capacity.
MemoryUpdateReport update_memory(MemoryState& state, const Matrix& batch, const DyceConfig& cfg,
                                 const SinkhornConfig& sinkhorn_cfg,
                                 const std::vector<int>& batch_labels = {});

/// Davies-Bouldin index over the partitions: mean_i max_{j != i}
/// (S_i + S_j) / d_ij with S the mean member-to-centroid distance and d the
/// centroid distance (both euclidean). Requires >= 2 non-empty partitions with
/// distinct centroids.
double dbi(const MemoryState& state);

/// Fraction of mined neighbor rows whose stored true label matches their
/// source row's label. Synthetic-runs diagnostic; requires labels on both the
/// memory and the batch.
double positive_purity(const MemoryState& state, const EnhancedBatch& enhanced,
                       const std::vector<int>& batch_labels);

}  // namespace otfs
