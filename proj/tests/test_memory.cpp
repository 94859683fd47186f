#include "otfs/memory.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace otfs;

namespace {

DyceConfig small_config(Index capacity, Index partitions, Index k,
                        DyceVariant variant = DyceVariant::Full) {
  DyceConfig cfg;
  cfg.capacity = capacity;
  cfg.partitions = partitions;
  cfg.neighbors = k;
  cfg.variant = variant;
  cfg.normalize_inputs = false;  // raw coordinates keep the hand values exact
  return cfg;
}

Matrix random_rows(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = unit(rng);
  }
  return m;
}

// Fills a memory with two far-apart 1-d clusters and bootstraps P=2.
MemoryState two_cluster_state(const DyceConfig& cfg) {
  MemoryState state = MemoryState::create(cfg.capacity, 1);
  Matrix batch(4, 1);
  batch << 0.0, 1.0, 10.0, 11.0;
  ingest_fill(state, batch, cfg);
  bootstrap_partitions(state, cfg, 99);
  return state;
}

}  // namespace

TEST_CASE("ingest_fill counts rows and enforces capacity") {
  DyceConfig cfg = small_config(16, 2, 0);
  MemoryState state = MemoryState::create(16, 3);
  std::mt19937_64 rng(1);

  ingest_fill(state, random_rows(8, 3, rng), cfg);
  CHECK(state.filled == 8);
  CHECK_FALSE(state.initialized);

  ingest_fill(state, random_rows(8, 3, rng), cfg);
  CHECK(state.filled == 16);

  CHECK_THROWS_AS(ingest_fill(state, random_rows(2, 3, rng), cfg), PreconditionError);
}

TEST_CASE("ingest_fill rejects overflowing batches") {
  DyceConfig cfg = small_config(8, 2, 0);
  MemoryState state = MemoryState::create(8, 3);
  std::mt19937_64 rng(2);
  ingest_fill(state, random_rows(6, 3, rng), cfg);
  CHECK_THROWS_AS(ingest_fill(state, random_rows(4, 3, rng), cfg), PreconditionError);
}

TEST_CASE("bootstrap on two clean pairs recovers the pair means") {
  DyceConfig cfg = small_config(4, 2, 1);
  const MemoryState state = two_cluster_state(cfg);
  CHECK(state.initialized);
  // One Lloyd step by hand from cluster-consistent seeds: centroids are the
  // pair means 0.5 and 10.5 in some order.
  std::vector<double> protos = {state.prototypes(0, 0), state.prototypes(1, 0)};
  std::sort(protos.begin(), protos.end());
  CHECK(protos[0] == doctest::Approx(0.5));
  CHECK(protos[1] == doctest::Approx(10.5));
  for (Index s = 0; s < state.filled; ++s) {
    CHECK(state.assignments[static_cast<std::size_t>(s)] >= 0);
    CHECK(state.assignments[static_cast<std::size_t>(s)] < 2);
  }
}

TEST_CASE("bootstrap with a single partition is the global mean") {
  DyceConfig cfg = small_config(4, 1, 0);
  MemoryState state = MemoryState::create(4, 1);
  Matrix batch(4, 1);
  batch << 1.0, 2.0, 3.0, 6.0;
  ingest_fill(state, batch, cfg);
  bootstrap_partitions(state, cfg, 1);
  CHECK(state.prototypes(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("bootstrap rejects more partitions than distinct points") {
  DyceConfig cfg = small_config(5, 5, 0);
  MemoryState state = MemoryState::create(5, 2);
  Matrix batch(5, 2);
  batch << 0, 0, 1, 1, 2, 2, 3, 3, 0, 0;  // only 4 distinct rows
  ingest_fill(state, batch, cfg);
  CHECK_THROWS_AS(bootstrap_partitions(state, cfg, 1), DegenerateClusteringError);
}

TEST_CASE("assign_nearest_prototype picks the closest, ties to the lowest index") {
  Matrix prototypes(2, 1);
  prototypes << 0.0, 10.0;
  Matrix z(1, 1);
  z << 1.0;
  CHECK(assign_nearest_prototype(z, prototypes) == std::vector<Index>{0});

  Matrix mid(1, 1);
  mid << 5.0;  // exactly equidistant
  CHECK(assign_nearest_prototype(mid, prototypes) == std::vector<Index>{0});

  Matrix three(3, 1);
  three << -1, 12, 4;
  CHECK(assign_nearest_prototype(three, prototypes).size() == 3);

  Matrix wrong(1, 2);
  wrong << 1, 2;
  CHECK_THROWS_AS(assign_nearest_prototype(wrong, prototypes), ShapeError);
}

TEST_CASE("topk_enhance selects exact duplicates first") {
  DyceConfig cfg = small_config(4, 2, 1);
  const MemoryState state = two_cluster_state(cfg);
  Matrix batch(1, 1);
  batch << 10.0;  // duplicate of slot 2
  const EnhancedBatch enhanced = topk_enhance(state, batch, cfg);
  CHECK(enhanced.rows.rows() == 2);
  CHECK(enhanced.rows(1, 0) == doctest::Approx(10.0));
  CHECK(enhanced.memory_slot[1] == 2);
}

TEST_CASE("topk_enhance shape: B=2 with k=3 gives 16 rows") {
  DyceConfig cfg = small_config(32, 2, 3);
  MemoryState state = MemoryState::create(32, 2);
  std::mt19937_64 rng(5);
  ingest_fill(state, random_rows(32, 2, rng), cfg);
  bootstrap_partitions(state, cfg, 7);

  const Matrix batch = random_rows(4, 2, rng);  // 2B rows with B=2
  const EnhancedBatch enhanced = topk_enhance(state, batch, cfg);
  CHECK(enhanced.rows.rows() == 16);  // 2B(k+1)
  CHECK(enhanced.rows.topRows(4) == batch);
  for (Index i = 0; i < 4; ++i) CHECK(enhanced.source_row[static_cast<std::size_t>(i)] == i);
  for (Index i = 4; i < 16; ++i) {
    CHECK(enhanced.memory_slot[static_cast<std::size_t>(i)] >= 0);
    CHECK(enhanced.source_row[static_cast<std::size_t>(i)] == (i - 4) / 3);
  }
}

TEST_CASE("topk_enhance falls back to a global search on small partitions") {
  // Partition 1 holds two members only; with k = 3 the result must equal the
  // exhaustive distance sort over the whole store.
  DyceConfig cfg = small_config(8, 2, 3);
  MemoryState state = MemoryState::create(8, 1);
  Matrix batch(8, 1);
  batch << 0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 30.0, 31.0;
  ingest_fill(state, batch, cfg);
  bootstrap_partitions(state, cfg, 3);

  Matrix query(1, 1);
  query << 30.4;
  const std::vector<Index> nearest = assign_nearest_prototype(query, state.prototypes);
  Index members = 0;
  for (Index s = 0; s < state.filled; ++s) {
    if (state.assignments[static_cast<std::size_t>(s)] == nearest[0]) ++members;
  }
  REQUIRE(members == 2);

  const EnhancedBatch enhanced = topk_enhance(state, query, cfg);
  const std::vector<Index> expected =
      oracle::exhaustive_topk(state.slots.topRows(state.filled), query.row(0), 3);
  std::vector<Index> got(enhanced.memory_slot.begin() + 1, enhanced.memory_slot.end());
  std::sort(got.begin(), got.end());
  std::vector<Index> want = expected;
  std::sort(want.begin(), want.end());
  CHECK(got == want);
}

TEST_CASE("update_memory keeps the store full and equipartitions the plan") {
  const Index capacity = 64;
  const Index batch_rows = 16;
  DyceConfig cfg = small_config(capacity, 4, 0);
  MemoryState state = MemoryState::create(capacity, 3);
  std::mt19937_64 rng(9);
  ingest_fill(state, random_rows(capacity, 3, rng), cfg);
  bootstrap_partitions(state, cfg, 11);

  SinkhornConfig sinkhorn_cfg;
  for (int step = 0; step < 10; ++step) {
    const MemoryUpdateReport report =
        update_memory(state, random_rows(batch_rows, 3, rng), cfg, sinkhorn_cfg);
    CHECK(state.filled == capacity);
    REQUIRE(report.plan.has_value());
    const Vector col_sums = report.plan->values.colwise().sum();
    for (Index j = 0; j < 4; ++j) CHECK(std::abs(col_sums[j] - 0.25) <= 1e-6);
    CHECK(report.evicted_births.size() == batch_rows);
    for (Index s = 0; s < state.filled; ++s) {
      CHECK(state.assignments[static_cast<std::size_t>(s)] >= 0);
      CHECK(state.assignments[static_cast<std::size_t>(s)] < 4);
    }
  }
}

TEST_CASE("update_memory evicts exactly the oldest rows (replay oracle)") {
  const Index capacity = 32;
  const Index batch_rows = 8;
  DyceConfig cfg = small_config(capacity, 2, 0);
  MemoryState state = MemoryState::create(capacity, 2);
  std::mt19937_64 rng(13);
  for (int i = 0; i < 4; ++i) ingest_fill(state, random_rows(batch_rows, 2, rng), cfg);
  bootstrap_partitions(state, cfg, 5);

  // Replay the insertion order independently: birth counters 0..31, then each
  // update appends `batch_rows` and removes the `batch_rows` smallest.
  std::vector<std::uint64_t> oracle_births(capacity);
  std::iota(oracle_births.begin(), oracle_births.end(), 0);
  std::uint64_t next_birth = capacity;

  for (int step = 0; step < 6; ++step) {
    const MemoryUpdateReport report =
        update_memory(state, random_rows(batch_rows, 2, rng), cfg, {});
    std::vector<std::uint64_t> expected_evicted(oracle_births.begin(),
                                                oracle_births.begin() + batch_rows);
    CHECK(report.evicted_births == expected_evicted);
    oracle_births.erase(oracle_births.begin(), oracle_births.begin() + batch_rows);
    for (Index i = 0; i < batch_rows; ++i) oracle_births.push_back(next_birth++);
    CHECK(state.births == oracle_births);
  }
}

TEST_CASE("update_memory conserves the slot count") {
  DyceConfig cfg = small_config(16, 2, 0, DyceVariant::Fifo);
  MemoryState state = MemoryState::create(16, 2);
  std::mt19937_64 rng(17);
  ingest_fill(state, random_rows(16, 2, rng), cfg);
  const Matrix batch = random_rows(4, 2, rng);
  update_memory(state, batch, cfg, {});
  CHECK(state.filled == 16);
  // FIFO keeps no partitions: newest rows sit at the back, verbatim.
  CHECK(state.slots.block(12, 0, 4, 2) == batch);
  CHECK(state.assignments.back() == -1);
}

TEST_CASE("full and kmeans variants coincide at a single partition") {
  std::mt19937_64 rng(19);
  const Matrix fill = random_rows(8, 2, rng);
  const Matrix batch = random_rows(4, 2, rng);

  auto run = [&](DyceVariant variant) {
    DyceConfig cfg = small_config(8, 1, 0, variant);
    MemoryState state = MemoryState::create(8, 2);
    ingest_fill(state, fill, cfg);
    bootstrap_partitions(state, cfg, 23);
    update_memory(state, batch, cfg, {});
    return state.assignments;
  };
  CHECK(run(DyceVariant::Full) == run(DyceVariant::KMeans));
}

TEST_CASE("dbi matches the hand-evaluated two-cluster value") {
  DyceConfig cfg = small_config(4, 2, 0);
  MemoryState state = MemoryState::create(4, 2);
  Matrix batch(4, 2);
  batch << 0, 0, 1, 0, 10, 0, 11, 0;
  ingest_fill(state, batch, cfg);
  bootstrap_partitions(state, cfg, 31);
  CHECK(dbi(state) == doctest::Approx(0.1));

  // Cross-check against the from-definition oracle on the same store.
  std::vector<Index> assignment(state.assignments.begin(), state.assignments.end());
  CHECK(dbi(state) ==
        doctest::Approx(oracle::davies_bouldin(state.slots.topRows(4), assignment, 2)));
}

TEST_CASE("dbi is undefined for degenerate stores") {
  DyceConfig single = small_config(4, 1, 0);
  MemoryState state = MemoryState::create(4, 1);
  Matrix batch(4, 1);
  batch << 1, 2, 3, 4;
  ingest_fill(state, batch, single);
  bootstrap_partitions(state, single, 1);
  CHECK_THROWS_AS(dbi(state), MetricUndefinedError);

  // Two partitions forced onto identical centroids.
  DyceConfig pair_cfg = small_config(4, 2, 0);
  MemoryState coincident = MemoryState::create(4, 1);
  Matrix same(4, 1);
  same << 0, 4, 0, 4;
  ingest_fill(coincident, same, pair_cfg);
  bootstrap_partitions(coincident, pair_cfg, 3);
  coincident.assignments = {0, 0, 1, 1};  // both centroids land on 2
  CHECK_THROWS_AS(dbi(coincident), MetricUndefinedError);
}

TEST_CASE("positive_purity counts matching neighbor labels") {
  DyceConfig cfg = small_config(4, 2, 1);
  MemoryState state = MemoryState::create(4, 1);
  Matrix batch(4, 1);
  batch << 0.0, 1.0, 10.0, 11.0;
  ingest_fill(state, batch, cfg, {0, 0, 1, 1});
  bootstrap_partitions(state, cfg, 99);

  Matrix queries(2, 1);
  queries << 0.5, 10.5;
  const EnhancedBatch enhanced = topk_enhance(state, queries, cfg);
  CHECK(positive_purity(state, enhanced, {0, 1}) == doctest::Approx(1.0));
  CHECK(positive_purity(state, enhanced, {0, 0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(positive_purity(state, enhanced, {}), PreconditionError);

  DyceConfig no_neighbors = small_config(4, 2, 0);
  const EnhancedBatch bare = topk_enhance(state, queries, no_neighbors);
  CHECK_THROWS_AS(positive_purity(state, bare, {0, 1}), MetricUndefinedError);
}
