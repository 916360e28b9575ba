#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "spav/error.hpp"
#include "spav/vec.hpp"

namespace spav {

// Oriented point cloud S = {x, n}: positions in meters, unit normals,
// optional RGB colors in [0,1]. Coordinates are stored as f32; loss and
// gradient math upstream runs in f64.
struct OrientedPointCloud {
    std::vector<Vec3f> positions;
    std::vector<Vec3f> normals;
    std::vector<Vec3f> colors;  // empty or same length as positions

    std::size_t size() const { return positions.size(); }
    bool has_colors() const { return !colors.empty(); }

    // Enforces the type invariants; throws on violation.
    void validate(float normal_tol = 1e-6f) const;

    Aabb bounds() const;
};

struct TriangleMesh {
    std::vector<Vec3f> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;
    std::vector<Vec3f> vertex_colors;       // empty or per-vertex
    std::vector<std::uint8_t> face_labels;  // empty or per-face

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
    bool has_vertex_colors() const { return !vertex_colors.empty(); }
    bool has_face_labels() const { return !face_labels.empty(); }

    Vec3d face_normal(std::size_t f) const;  // unit, zero for degenerate
    double face_area(std::size_t f) const;
    double total_area() const;

    // Index bounds, no degenerate faces, attribute lengths.
    void validate() const;

    // Every edge shared by exactly two faces, each direction once.
    bool is_watertight() const;

    Aabb bounds() const;

    // Area-weighted vertex normals (flat face normals accumulated).
    std::vector<Vec3f> vertex_normals() const;
};

}  // namespace spav
