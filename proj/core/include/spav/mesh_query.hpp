#pragma once

#include <cstdint>
#include <vector>

#include "spav/grid.hpp"
#include "spav/pointcloud.hpp"

namespace spav {

// Closest point on a triangle (Ericson's region walk).
Vec3d closest_point_on_triangle(const Vec3d& p, const Vec3d& a, const Vec3d& b, const Vec3d& c);

// AABB tree over mesh triangles for nearest-surface queries. Queries are
// const and thread-safe.
class MeshQuery {
  public:
    explicit MeshQuery(const TriangleMesh& mesh);

    struct Hit {
        double distance = 0;
        std::uint32_t face = 0;
        Vec3d closest{0, 0, 0};
    };
    Hit nearest(const Vec3d& p) const;

    const TriangleMesh& mesh() const { return *mesh_; }

  private:
    struct Node {
        Aabb bounds;
        std::int32_t left = -1, right = -1;  // -1 marks a leaf
        std::uint32_t begin = 0, end = 0;
    };
    void build(std::uint32_t node, std::uint32_t begin, std::uint32_t end);

    const TriangleMesh* mesh_ = nullptr;
    std::vector<std::uint32_t> order_;
    std::vector<Vec3d> centroids_;
    std::vector<Node> nodes_;
};

// Inside flags (1 = interior) for voxel centers of the layout's cell grid,
// by ray-crossing parity along +x. The mesh should be watertight.
std::vector<std::uint8_t> voxelize_interior(const TriangleMesh& mesh, const GridLayout& layout);

}  // namespace spav
