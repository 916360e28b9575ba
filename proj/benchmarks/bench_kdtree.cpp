#include <benchmark/benchmark.h>

#include "spav/kdtree.hpp"
#include "spav/rng.hpp"

using namespace spav;

namespace {

std::vector<Vec3f> random_points(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3f> pts(n);
    for (auto& p : pts)
        p = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
             static_cast<float>(rng.uniform())};
    return pts;
}

// Trees are rebuilt every pose during training; build cost matters.
void BM_KdBuild(benchmark::State& state) {
    const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 1);
    for (auto _ : state) {
        KdIndex index{std::span<const Vec3f>(pts)};
        benchmark::DoNotOptimize(index.size());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KdBuild)->Arg(4096)->Arg(51200);

void BM_KdNearest(benchmark::State& state) {
    const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 2);
    const KdIndex index{std::span<const Vec3f>(pts)};
    Rng rng(3);
    for (auto _ : state) {
        const Vec3d q{rng.uniform(), rng.uniform(), rng.uniform()};
        benchmark::DoNotOptimize(index.nearest(q).index);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_KdNearest)->Arg(4096)->Arg(51200);

void BM_KdKnn8(benchmark::State& state) {
    const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 4);
    const KdIndex index{std::span<const Vec3f>(pts)};
    Rng rng(5);
    for (auto _ : state) {
        const Vec3d q{rng.uniform(), rng.uniform(), rng.uniform()};
        benchmark::DoNotOptimize(index.knn(q, 8).size());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_KdKnn8)->Arg(4096)->Arg(51200);

}  // namespace

BENCHMARK_MAIN();
