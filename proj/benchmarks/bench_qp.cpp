#include <benchmark/benchmark.h>

#include "gridledger/scenario.hpp"
#include "gridledger/tem/problem.hpp"

using namespace gridledger;

static void BM_CentralizedSolve(benchmark::State& state) {
  const auto s = scenario::generate_synthetic(1, int(state.range(0)), 24);
  const auto p = tem::assemble_problem(s, Mode::Tem);
  for (auto _ : state) benchmark::DoNotOptimize(qp::solve_qp(p));
  state.counters["vars"] = double(p.num_vars());
}
BENCHMARK(BM_CentralizedSolve)->Arg(2)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_UserSubproblem(benchmark::State& state) {
  const auto s = scenario::generate_synthetic(1, 5, 24);
  const auto d = tem::DualState::zeros(5, 24, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(qp::solve_qp(tem::assemble_ult(s, 0, d)));
}
BENCHMARK(BM_UserSubproblem)->Unit(benchmark::kMillisecond);
