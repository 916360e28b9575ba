#pragma once

#include <cstdint>
#include <vector>

#include "spav/pointcloud.hpp"

namespace spav {

// Area-weighted uniform surface sampling. Normals are flat face normals;
// colors are barycentrically interpolated when the mesh has vertex colors.
// Deterministic for a given seed.
OrientedPointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

// Same draw, also reporting the source face per sample.
OrientedPointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                                  std::vector<std::uint32_t>& face_out);

}  // namespace spav
