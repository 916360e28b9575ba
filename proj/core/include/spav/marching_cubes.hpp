#pragma once

#include <cstdint>

#include "spav/grid.hpp"
#include "spav/pointcloud.hpp"

namespace spav {

extern const std::uint16_t kMcEdgeTable[256];
extern const std::int8_t kMcTriTable[256][16];

// Standard 256-case marching cubes with linear edge interpolation and an
// edge-keyed vertex cache (no duplicate vertices). Faces are wound so their
// normals point toward increasing field values: outward both for SDFs
// (negative inside) and for Poisson indicators built from outward normals.
// Throws EmptySurface when iso lies outside the field range.
TriangleMesh marching_cubes(const ScalarGrid& field, double iso);

}  // namespace spav
