#include <benchmark/benchmark.h>

#include <random>

#include "gridledger/tem/admm.hpp"

using namespace gridledger;

static void BM_SctStep(benchmark::State& state) {
  const int N = int(state.range(0));
  tem::DualState d = tem::DualState::zeros(N, 24, 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (auto* t : {&d.e, &d.lambda})
    for (double& v : t->data()) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(tem::sct_step(d));
  state.SetItemsProcessed(state.iterations() * N * (N - 1) / 2 * 24);
}
BENCHMARK(BM_SctStep)->Arg(5)->Arg(10)->Arg(50);

static void BM_DualDigest(benchmark::State& state) {
  const tem::DualState d = tem::DualState::zeros(int(state.range(0)), 24, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(tem::dual_digest(d));
}
BENCHMARK(BM_DualDigest)->Arg(10)->Arg(50);
