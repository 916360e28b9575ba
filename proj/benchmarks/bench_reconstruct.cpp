#include <benchmark/benchmark.h>

#include "spav/reconstruct.hpp"
#include "spav/rng.hpp"

using namespace spav;

namespace {

OrientedPointCloud sphere_cloud(std::size_t n) {
    Rng rng(7);
    OrientedPointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3d dir = Vec3d{rng.normal(), rng.normal(), rng.normal()}.normalized();
        c.positions.push_back(Vec3f(dir));
        c.normals.push_back(Vec3f(dir));
    }
    return c;
}

// The full rasterize -> FFT Poisson -> marching cubes path.
void BM_Reconstruct(benchmark::State& state) {
    const OrientedPointCloud cloud = sphere_cloud(10000);
    const int resolution = static_cast<int>(state.range(0));
    for (auto _ : state) {
        const TriangleMesh mesh = reconstruct(cloud, resolution, 2.0);
        benchmark::DoNotOptimize(mesh.vertex_count());
    }
}
BENCHMARK(BM_Reconstruct)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
