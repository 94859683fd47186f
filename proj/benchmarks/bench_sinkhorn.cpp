#include "otfs/ot.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace otfs;

namespace {

CostMatrix random_cost(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return {m, Metric::SquaredEuclidean};
}

}  // namespace

static void BM_Sinkhorn(benchmark::State& state) {
  const Index rows = state.range(0);
  const Index cols = state.range(1);
  const CostMatrix cost = random_cost(rows, cols, 42);
  const Marginals marginals = Marginals::uniform(rows, cols);
  SinkhornConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sinkhorn(cost, marginals, cfg));
  }
}
BENCHMARK(BM_Sinkhorn)
    ->Args({16, 8})
    ->Args({64, 16})
    ->Args({64, 200})
    ->Args({256, 200});

static void BM_SinkhornSmallEpsilon(benchmark::State& state) {
  const CostMatrix cost = random_cost(state.range(0), state.range(0), 7);
  const Marginals marginals = Marginals::uniform(state.range(0), state.range(0));
  SinkhornConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.max_iterations = 500000;
  cfg.tolerance = 1e-5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sinkhorn(cost, marginals, cfg));
  }
}
BENCHMARK(BM_SinkhornSmallEpsilon)->Arg(4)->Arg(8);

static void BM_PairwiseCost(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> unit(0.0, 1.0);
  Matrix a(state.range(0), 64), b(state.range(1), 64);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < 64; ++j) a(i, j) = unit(rng);
  }
  for (Index i = 0; i < b.rows(); ++i) {
    for (Index j = 0; j < 64; ++j) b(i, j) = unit(rng);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(pairwise_cost(a, b, Metric::SquaredEuclidean));
  }
}
BENCHMARK(BM_PairwiseCost)->Args({512, 200})->Args({2048, 200});

BENCHMARK_MAIN();
