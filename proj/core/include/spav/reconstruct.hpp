#pragma once

#include "spav/pointcloud.hpp"

namespace spav {

struct ReconstructStats {
    double rasterize_seconds = 0;
    double solve_seconds = 0;
    double mesh_seconds = 0;
    double total_seconds = 0;
    double isolevel = 0;
};

// rasterize -> spectral Poisson solve -> isolevel -> marching cubes.
TriangleMesh reconstruct(const OrientedPointCloud& cloud, int resolution = 128, double sigma = 2.0,
                         ReconstructStats* stats = nullptr);

}  // namespace spav
