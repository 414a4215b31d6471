#include <benchmark/benchmark.h>

#include "gridledger/chain/transaction.hpp"
#include "gridledger/netsim/simulator.hpp"

using namespace gridledger;

static void BM_ConsensusBlocks(benchmark::State& state) {
  const int n = int(state.range(0));
  const auto mode = state.range(1) ? chain::ProtocolMode::Classic : chain::ProtocolMode::Modified;
  constexpr std::uint64_t kBlocks = 10;
  for (auto _ : state) {
    auto cfg = std::make_shared<chain::ConsensusConfig>();
    for (int v = 0; v < n; ++v) cfg->validators.push_back(chain::NodeId(v));
    cfg->mode = mode;
    netsim::NetConfig net;
    net.seed = 5;
    netsim::Simulator sim(net);
    for (auto v : cfg->validators) sim.add(std::make_unique<netsim::ChainProcess>(v, chain::Role::Validator, cfg));
    sim.run_until(netsim::StopCondition::at_height(kBlocks));
    benchmark::DoNotOptimize(sim.trace().sends);
  }
  state.SetItemsProcessed(state.iterations() * kBlocks);
}
BENCHMARK(BM_ConsensusBlocks)->ArgsProduct({{4, 7, 13}, {0, 1}})->ArgNames({"n", "classic"})->Unit(benchmark::kMillisecond);

static void BM_TransactionCodec(benchmark::State& state) {
  const auto tx = chain::make_signed(chain::HorizontalTrade{1, 7, std::vector<double>(4 * 24, 0.5)}, 5, 1);
  for (auto _ : state) benchmark::DoNotOptimize(chain::decode_transaction(chain::encode_transaction(tx)));
}
BENCHMARK(BM_TransactionCodec);
