#pragma once

#include "spav/grid.hpp"
#include "spav/pointcloud.hpp"

namespace spav {

// Trilinear splat of the oriented normals onto the lattice followed by a
// spectral Gaussian blur (sigma in cells). The splat conserves the per-axis
// normal sums; the blur has unit DC gain.
VectorGrid rasterize_normals(const OrientedPointCloud& cloud, int resolution, double sigma,
                             double padding = 1.2);
VectorGrid rasterize_normals(const OrientedPointCloud& cloud, const GridLayout& layout, double sigma);

// Solves laplacian(chi) = div(v) on the periodic lattice in the frequency
// domain. The zero-frequency coefficient is set to zero, so the solution has
// zero mean.
ScalarGrid poisson_solve(const VectorGrid& v);

// Mean of the trilinearly interpolated field at the cloud positions.
double select_isolevel(const ScalarGrid& chi, const OrientedPointCloud& cloud);

}  // namespace spav
