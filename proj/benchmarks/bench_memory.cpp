#include "otfs/loss.hpp"
#include "otfs/memory.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace otfs;

namespace {

Matrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = unit(rng);
  }
  return m;
}

MemoryState full_state(const DyceConfig& cfg, Index dim) {
  MemoryState state = MemoryState::create(cfg.capacity, dim);
  ingest_fill(state, gaussian(cfg.capacity, dim, 1), cfg);
  bootstrap_partitions(state, cfg, 2);
  return state;
}

}  // namespace

static void BM_MemoryUpdate(benchmark::State& state) {
  DyceConfig cfg;
  cfg.capacity = state.range(0);
  cfg.partitions = state.range(1);
  cfg.neighbors = 0;
  MemoryState memory = full_state(cfg, 32);
  const Matrix batch = gaussian(64, 32, 3);
  SinkhornConfig sinkhorn_cfg{0.15, 50000, 1e-6};
  for (auto _ : state) {
    benchmark::DoNotOptimize(update_memory(memory, batch, cfg, sinkhorn_cfg));
  }
}
BENCHMARK(BM_MemoryUpdate)->Args({512, 16})->Args({2048, 64})->Args({8192, 200});

static void BM_TopkEnhance(benchmark::State& state) {
  DyceConfig cfg;
  cfg.capacity = state.range(0);
  cfg.partitions = 16;
  cfg.neighbors = 3;
  MemoryState memory = full_state(cfg, 32);
  const Matrix batch = gaussian(64, 32, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(topk_enhance(memory, batch, cfg));
  }
}
BENCHMARK(BM_TopkEnhance)->Arg(512)->Arg(2048)->Arg(8192);

static void BM_LossGradient(benchmark::State& state) {
  const Index b = state.range(0);
  const Index k = state.range(1);
  const PositivePairMap map = build_pair_map(b, k);
  const Matrix z_s = gaussian(map.rows(), 64, 7);
  const Matrix z_t = gaussian(map.rows(), 64, 9);
  const LossConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss_grad_student(z_s, z_t, map, cfg));
  }
}
BENCHMARK(BM_LossGradient)->Args({32, 0})->Args({32, 3})->Args({128, 3});

BENCHMARK_MAIN();
