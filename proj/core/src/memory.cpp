#include "otfs/memory.hpp"

#include "otfs/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace otfs {

namespace {

Matrix l2_normalized(const Matrix& rows) {
  Vector norms = rows.rowwise().norm();
  norms = norms.cwiseMax(1e-300);  // zero rows stay zero instead of dividing by 0
  return rows.array().colwise() / norms.array();
}

Matrix maybe_normalized(const Matrix& rows, const DyceConfig& cfg) {
  return cfg.normalize_inputs ? l2_normalized(rows) : rows;
}

// Squared distances from every row of a to every row of b, as one GEMM.
Matrix squared_distances(const Matrix& a, const Matrix& b) {
  Matrix d = -2.0 * (a * b.transpose());
  d.colwise() += a.rowwise().squaredNorm();
  d.rowwise() += b.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

Index count_distinct_rows(const Matrix& rows) {
  std::vector<Index> order(static_cast<std::size_t>(rows.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index c = 0; c < rows.cols(); ++c) {
      if (rows(a, c) != rows(b, c)) return rows(a, c) < rows(b, c);
    }
    return false;
  });
  Index distinct = rows.rows() > 0 ? 1 : 0;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (rows.row(order[i]) != rows.row(order[i - 1])) ++distinct;
  }
  return distinct;
}

// k-means++ seeding followed by Lloyd iterations. Deterministic per seed.
Matrix lloyd_kmeans(const Matrix& points, Index k, std::uint64_t seed) {
  const Index n = points.rows();
  std::mt19937_64 rng(splitmix64(seed));

  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  Vector dist2 = squared_distances(points, centroids.topRows(1)).col(0);
  for (Index j = 1; j < k; ++j) {
    const double total = dist2.sum();
    Index pick = 0;
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (Index i = 0; i < n; ++i) {
        target -= dist2[i];
        if (target <= 0) { pick = i; break; }
        pick = i;
      }
    } else {
      pick = first(rng);
    }
    centroids.row(j) = points.row(pick);
    dist2 = dist2.cwiseMin(squared_distances(points, centroids.row(j)).col(0));
  }

  constexpr int kMaxIterations = 100;
  constexpr double kShiftStop = 1e-6;
  std::vector<Index> assignment(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const Matrix d2 = squared_distances(points, centroids);
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      d2.row(i).minCoeff(&best);
      assignment[static_cast<std::size_t>(i)] = best;
    }

    Matrix next = Matrix::Zero(k, points.cols());
    Vector counts = Vector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      next.row(assignment[static_cast<std::size_t>(i)]) += points.row(i);
      counts[assignment[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Index j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        next.row(j) /= counts[j];
      } else {
        // An emptied centroid re-seeds at the point farthest from its assignment.
        Index far = 0;
        Vector mind = d2.rowwise().minCoeff();
        mind.maxCoeff(&far);
        next.row(j) = points.row(far);
      }
    }

    double max_shift = 0.0;
    for (Index j = 0; j < k; ++j) {
      const double shift = (next.row(j) - centroids.row(j)).norm();
      const double scale = std::max(centroids.row(j).norm(), 1.0);
      max_shift = std::max(max_shift, shift / scale);
    }
    centroids = next;
    if (max_shift <= kShiftStop) break;
  }
  return centroids;
}

std::vector<Index> topk_in_pool(const Matrix& store, const std::vector<Index>& pool,
                                const RowVector& query, Index k) {
  std::vector<std::pair<double, Index>> scored;
  scored.reserve(pool.size());
  for (Index slot : pool) {
    scored.emplace_back((store.row(slot) - query).squaredNorm(), slot);
  }
  std::partial_sort(scored.begin(),
                    scored.begin() + std::min<std::ptrdiff_t>(k, scored.size()),
                    scored.end());
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Index j = 0; j < k && j < static_cast<Index>(scored.size()); ++j) {
    out.push_back(scored[static_cast<std::size_t>(j)].second);
  }
  return out;
}

void evict_oldest(MemoryState& state, Index count, MemoryUpdateReport& report) {
  // Slots are kept in insertion order, so the oldest `count` are the front.
  const Index remaining = state.filled - count;
  for (Index i = 0; i < count; ++i) {
    report.evicted_births.push_back(state.births[static_cast<std::size_t>(i)]);
  }
  Matrix kept = state.slots.block(count, 0, remaining, state.dim());
  state.slots.topRows(remaining) = kept;
  state.births.erase(state.births.begin(), state.births.begin() + count);
  state.assignments.erase(state.assignments.begin(), state.assignments.begin() + count);
  if (state.has_labels()) {
    state.labels.erase(state.labels.begin(), state.labels.begin() + count);
  }
  state.filled = remaining;
}

void append_rows(MemoryState& state, const Matrix& rows, const std::vector<Index>& partition,
                 const std::vector<int>& batch_labels) {
  const Index n = rows.rows();
  if (state.slots.rows() < state.filled + n) {
    Matrix grown(state.filled + n, state.dim());
    grown.topRows(state.filled) = state.slots.topRows(state.filled);
    state.slots = std::move(grown);
  }
  state.slots.block(state.filled, 0, n, state.dim()) = rows;
  for (Index i = 0; i < n; ++i) {
    state.births.push_back(state.clock++);
    state.assignments.push_back(partition.empty() ? Index{-1} : partition[static_cast<std::size_t>(i)]);
    if (!batch_labels.empty()) state.labels.push_back(batch_labels[static_cast<std::size_t>(i)]);
  }
  state.filled += n;
}

}  // namespace

const char* variant_name(DyceVariant variant) {
  switch (variant) {
    case DyceVariant::Full: return "full";
    case DyceVariant::Fifo: return "fifo";
    case DyceVariant::KMeans: return "kmeans";
  }
  return "unknown";
}

DyceVariant variant_from_name(const std::string& name) {
  if (name == "full") return DyceVariant::Full;
  if (name == "fifo") return DyceVariant::Fifo;
  if (name == "kmeans") return DyceVariant::KMeans;
  throw ConfigError("unknown memory variant: " + name);
}

void DyceConfig::validate() const {
  if (partitions < 1) throw ConfigError("dyce partitions must be >= 1");
  if (capacity < partitions) throw ConfigError("dyce capacity must be >= partitions");
  if (neighbors < 0) throw ConfigError("dyce neighbors must be >= 0");
  if (epoch_threshold < 0) throw ConfigError("dyce epoch_threshold must be >= 0");
  if (prototype_ema_rate < 0 || prototype_ema_rate > 1)
    throw ConfigError("dyce prototype_ema_rate must be in [0, 1]");
}

MemoryState MemoryState::create(Index capacity, Index dim) {
  MemoryState state;
  state.slots = Matrix::Zero(capacity, dim);
  state.prototypes = Matrix();
  return state;
}

void ingest_fill(MemoryState& state, const Matrix& batch, const DyceConfig& cfg,
                 const std::vector<int>& batch_labels) {
  cfg.validate();
  if (batch.cols() != state.dim()) throw ShapeError("ingest_fill: dimension mismatch");
  if (state.filled >= cfg.capacity)
    throw PreconditionError("ingest_fill: memory already full, use update_memory");
  if (state.filled + batch.rows() > cfg.capacity)
    throw PreconditionError("ingest_fill: batch overflows remaining capacity");
  if (!batch_labels.empty() && static_cast<Index>(batch_labels.size()) != batch.rows())
    throw ShapeError("ingest_fill: label count does not match batch rows");
  append_rows(state, maybe_normalized(batch, cfg), {}, batch_labels);
}

void bootstrap_partitions(MemoryState& state, const DyceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (state.filled != cfg.capacity)
    throw PreconditionError("bootstrap_partitions: memory is not full yet");
  if (state.initialized) throw PreconditionError("bootstrap_partitions: already initialized");

  const Matrix stored = state.slots.topRows(state.filled);
  if (count_distinct_rows(stored) < cfg.partitions)
    throw DegenerateClusteringError(
        "bootstrap_partitions: fewer distinct embeddings than partitions");

  state.prototypes = lloyd_kmeans(stored, cfg.partitions, seed);
  const std::vector<Index> nearest = assign_nearest_prototype(stored, state.prototypes);
  state.assignments.assign(nearest.begin(), nearest.end());
  state.initialized = true;
}

std::vector<Index> assign_nearest_prototype(const Matrix& batch, const Matrix& prototypes) {
  if (batch.cols() != prototypes.cols())
    throw ShapeError("assign_nearest_prototype: dimension mismatch");
  if (prototypes.rows() < 1) throw ShapeError("assign_nearest_prototype: no prototypes");
  const Matrix d2 = squared_distances(batch, prototypes);
  std::vector<Index> nu(static_cast<std::size_t>(batch.rows()));
  for (Index i = 0; i < batch.rows(); ++i) {
    Index best = 0;  // minCoeff scans forward, so ties land on the lowest index
    d2.row(i).minCoeff(&best);
    nu[static_cast<std::size_t>(i)] = best;
  }
  return nu;
}

EnhancedBatch topk_enhance(const MemoryState& state, const Matrix& batch, const DyceConfig& cfg) {
  cfg.validate();
  if (batch.cols() != state.dim()) throw ShapeError("topk_enhance: dimension mismatch");
  if (cfg.variant != DyceVariant::Fifo && !state.initialized)
    throw PreconditionError("topk_enhance: partitions not bootstrapped");

  const Index rows = batch.rows();
  const Index k = cfg.neighbors;
  EnhancedBatch out;
  out.rows = Matrix(rows * (k + 1), state.dim());
  out.rows.topRows(rows) = batch;  // originals verbatim
  out.source_row.resize(static_cast<std::size_t>(rows * (k + 1)));
  out.memory_slot.assign(static_cast<std::size_t>(rows * (k + 1)), -1);
  for (Index i = 0; i < rows; ++i) out.source_row[static_cast<std::size_t>(i)] = i;
  if (k == 0) return out;

  const Matrix queries = maybe_normalized(batch, cfg);

  std::vector<Index> all_slots(static_cast<std::size_t>(state.filled));
  std::iota(all_slots.begin(), all_slots.end(), Index{0});
  std::vector<std::vector<Index>> members;
  std::vector<Index> nu;
  if (cfg.variant != DyceVariant::Fifo) {
    members.resize(static_cast<std::size_t>(state.prototypes.rows()));
    for (Index s = 0; s < state.filled; ++s) {
      members[static_cast<std::size_t>(state.assignments[static_cast<std::size_t>(s)])].push_back(s);
    }
    nu = assign_nearest_prototype(queries, state.prototypes);
  }

  const Matrix store = state.slots.topRows(state.filled);
  for (Index i = 0; i < rows; ++i) {
    const RowVector query = queries.row(i);
    std::vector<Index> picked;
    if (cfg.variant == DyceVariant::Fifo) {
      picked = topk_in_pool(store, all_slots, query, k);
    } else {
      const auto& pool = members[static_cast<std::size_t>(nu[static_cast<std::size_t>(i)])];
      picked = static_cast<Index>(pool.size()) >= k ? topk_in_pool(store, pool, query, k)
                                                    : topk_in_pool(store, all_slots, query, k);
    }
    for (Index j = 0; j < k; ++j) {
      const Index dest = rows + i * k + j;
      out.rows.row(dest) = store.row(picked[static_cast<std::size_t>(j)]);
      out.source_row[static_cast<std::size_t>(dest)] = i;
      out.memory_slot[static_cast<std::size_t>(dest)] = picked[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

MemoryUpdateReport update_memory(MemoryState& state, const Matrix& batch, const DyceConfig& cfg,
                                 const SinkhornConfig& sinkhorn_cfg,
                                 const std::vector<int>& batch_labels) {
  cfg.validate();
  if (batch.cols() != state.dim()) throw ShapeError("update_memory: dimension mismatch");
  if (state.filled != cfg.capacity)
    throw PreconditionError("update_memory: memory must be full (use ingest_fill first)");
  if (cfg.variant != DyceVariant::Fifo && !state.initialized)
    throw PreconditionError("update_memory: partitions not bootstrapped");
  if (!batch_labels.empty() && static_cast<Index>(batch_labels.size()) != batch.rows())
    throw ShapeError("update_memory: label count does not match batch rows");

  const Index rows = batch.rows();
  const Matrix incoming = maybe_normalized(batch, cfg);
  MemoryUpdateReport report;

  std::vector<Index> assigned;
  if (cfg.variant == DyceVariant::Full) {
    const CostMatrix cost = pairwise_cost(incoming, state.prototypes, Metric::SquaredEuclidean);
    const Marginals marginals = Marginals::uniform(rows, state.prototypes.rows());
    TransportPlan plan = sinkhorn(cost, marginals, sinkhorn_cfg);
    assigned.resize(static_cast<std::size_t>(rows));
    for (Index i = 0; i < rows; ++i) {
      Index best = 0;
      plan.values.row(i).maxCoeff(&best);
      assigned[static_cast<std::size_t>(i)] = best;
    }
    report.plan = std::move(plan);
  } else if (cfg.variant == DyceVariant::KMeans) {
    assigned = assign_nearest_prototype(incoming, state.prototypes);
  }

  if (cfg.variant != DyceVariant::Fifo) {
    // EMA each touched prototype toward the mean of its newly assigned rows.
    Matrix sums = Matrix::Zero(state.prototypes.rows(), state.dim());
    Vector counts = Vector::Zero(state.prototypes.rows());
    for (Index i = 0; i < rows; ++i) {
      sums.row(assigned[static_cast<std::size_t>(i)]) += incoming.row(i);
      counts[assigned[static_cast<std::size_t>(i)]] += 1.0;
    }
    const double eta = cfg.prototype_ema_rate;
    for (Index j = 0; j < state.prototypes.rows(); ++j) {
      if (counts[j] > 0) {
        state.prototypes.row(j) =
            eta * state.prototypes.row(j) + (1.0 - eta) * (sums.row(j) / counts[j]);
      }
    }
    report.assigned_partition = assigned;
  }

  append_rows(state, incoming, assigned, batch_labels);
  evict_oldest(state, rows, report);

  if (cfg.variant != DyceVariant::Fifo && cfg.prototype_pure_mean) {
    Matrix sums = Matrix::Zero(state.prototypes.rows(), state.dim());
    Vector counts = Vector::Zero(state.prototypes.rows());
    for (Index s = 0; s < state.filled; ++s) {
      const Index p = state.assignments[static_cast<std::size_t>(s)];
      sums.row(p) += state.slots.row(s);
      counts[p] += 1.0;
    }
    for (Index j = 0; j < state.prototypes.rows(); ++j) {
      if (counts[j] > 0) state.prototypes.row(j) = sums.row(j) / counts[j];
    }
  }
  return report;
}

double dbi(const MemoryState& state) {
  if (!state.initialized) throw PreconditionError("dbi: partitions not bootstrapped");
  const Index p = state.prototypes.rows();
  if (p < 2) throw MetricUndefinedError("dbi: needs at least 2 partitions");

  Matrix centroids = Matrix::Zero(p, state.dim());
  Vector counts = Vector::Zero(p);
  for (Index s = 0; s < state.filled; ++s) {
    const Index j = state.assignments[static_cast<std::size_t>(s)];
    centroids.row(j) += state.slots.row(s);
    counts[j] += 1.0;
  }
  if ((counts.array() == 0).any()) throw MetricUndefinedError("dbi: empty partition");
  centroids.array().colwise() /= counts.array();

  Vector scatter = Vector::Zero(p);
  for (Index s = 0; s < state.filled; ++s) {
    const Index j = state.assignments[static_cast<std::size_t>(s)];
    scatter[j] += (state.slots.row(s) - centroids.row(j)).norm();
  }
  scatter.array() /= counts.array();

  double total = 0.0;
  for (Index i = 0; i < p; ++i) {
    double worst = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (j == i) continue;
      const double separation = (centroids.row(i) - centroids.row(j)).norm();
      if (separation == 0) throw MetricUndefinedError("dbi: coincident centroids");
      worst = std::max(worst, (scatter[i] + scatter[j]) / separation);
    }
    total += worst;
  }
  return total / static_cast<double>(p);
}

double positive_purity(const MemoryState& state, const EnhancedBatch& enhanced,
                       const std::vector<int>& batch_labels) {
  if (!state.has_labels() || batch_labels.empty())
    throw PreconditionError("positive_purity: labels unavailable");
  Index neighbors = 0;
  Index matches = 0;
  for (std::size_t row = 0; row < enhanced.memory_slot.size(); ++row) {
    const Index slot = enhanced.memory_slot[row];
    if (slot < 0) continue;  // original row
    ++neighbors;
    const Index source = enhanced.source_row[row];
    if (state.labels[static_cast<std::size_t>(slot)] ==
        batch_labels[static_cast<std::size_t>(source)]) {
      ++matches;
    }
  }
  if (neighbors == 0) throw MetricUndefinedError("positive_purity: no neighbor rows");
  return static_cast<double>(matches) / static_cast<double>(neighbors);
}

}  // namespace otfs
