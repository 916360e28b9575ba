#pragma once

#include "spav/pointcloud.hpp"

namespace spav {

// Subdivided icosahedron, watertight, vertices exactly at radius r.
TriangleMesh make_icosphere(const Vec3d& center, double radius, int subdivisions);

// Axis-aligned box, 12 triangles, outward winding.
TriangleMesh make_box(const Vec3d& lo, const Vec3d& hi);

// Two triangles spanning [0,1]^2 in the z=0 plane, +z normal.
TriangleMesh make_unit_quad();

}  // namespace spav
