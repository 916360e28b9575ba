#include <benchmark/benchmark.h>

#include "spav/losses.hpp"
#include "spav/rng.hpp"

using namespace spav;

namespace {

std::vector<Vec3d> random_cloud(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3d> pts(n);
    for (auto& p : pts) p = {rng.uniform(), rng.uniform(), rng.uniform()};
    return pts;
}

void BM_Chamfer(benchmark::State& state) {
    const auto a = random_cloud(static_cast<std::size_t>(state.range(0)), 1);
    const auto b = random_cloud(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(chamfer(a, b).value);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Chamfer)->Arg(1024)->Arg(4096)->Arg(51200);

void BM_EmdAuction(benchmark::State& state) {
    const auto a = random_cloud(static_cast<std::size_t>(state.range(0)), 3);
    const auto b = random_cloud(static_cast<std::size_t>(state.range(0)), 4);
    AuctionConfig config;
    config.max_bids = 200000;  // training profile
    for (auto _ : state) benchmark::DoNotOptimize(emd_match(a, b, config).cost);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EmdAuction)->Arg(64)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
