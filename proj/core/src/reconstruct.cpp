#include "spav/reconstruct.hpp"

#include <chrono>

#include "spav/marching_cubes.hpp"
#include "spav/poisson.hpp"

namespace spav {

TriangleMesh reconstruct(const OrientedPointCloud& cloud, int resolution, double sigma,
                         ReconstructStats* stats) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const VectorGrid field = rasterize_normals(cloud, resolution, sigma);
    const auto t1 = clock::now();
    const ScalarGrid chi = poisson_solve(field);
    const auto t2 = clock::now();
    const double iso = select_isolevel(chi, cloud);
    TriangleMesh mesh = marching_cubes(chi, iso);
    const auto t3 = clock::now();

    if (stats) {
        auto sec = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
        stats->rasterize_seconds = sec(t0, t1);
        stats->solve_seconds = sec(t1, t2);
        stats->mesh_seconds = sec(t2, t3);
        stats->total_seconds = sec(t0, t3);
        stats->isolevel = iso;
    }
    return mesh;
}

}  // namespace spav
