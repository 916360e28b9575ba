#include "spav/pointcloud.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <string>

namespace spav {

void OrientedPointCloud::validate(float normal_tol) const {
    if (normals.size() != positions.size())
        throw DimensionMismatch("point cloud: positions/normals length mismatch");
    if (!colors.empty() && colors.size() != positions.size())
        throw DimensionMismatch("point cloud: colors length mismatch");
    for (std::size_t i = 0; i < normals.size(); ++i) {
        const float n = normals[i].norm();
        if (std::fabs(n - 1.0f) > normal_tol)
            throw Error("point cloud: normal " + std::to_string(i) + " has norm " + std::to_string(n));
    }
}

Aabb OrientedPointCloud::bounds() const {
    Aabb box;
    for (const auto& p : positions) box.expand(Vec3d(p));
    return box;
}

Vec3d TriangleMesh::face_normal(std::size_t f) const {
    const auto& t = faces[f];
    const Vec3d a(vertices[t[0]]), b(vertices[t[1]]), c(vertices[t[2]]);
    return (b - a).cross(c - a).normalized(1e-30);
}

double TriangleMesh::face_area(std::size_t f) const {
    const auto& t = faces[f];
    const Vec3d a(vertices[t[0]]), b(vertices[t[1]]), c(vertices[t[2]]);
    return 0.5 * (b - a).cross(c - a).norm();
}

double TriangleMesh::total_area() const {
    double s = 0;
    for (std::size_t f = 0; f < faces.size(); ++f) s += face_area(f);
    return s;
}

void TriangleMesh::validate() const {
    const std::uint32_t n = static_cast<std::uint32_t>(vertices.size());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        if (t[0] >= n || t[1] >= n || t[2] >= n)
            throw Error("mesh: face " + std::to_string(f) + " index out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw Error("mesh: face " + std::to_string(f) + " is degenerate");
    }
    if (!vertex_colors.empty() && vertex_colors.size() != vertices.size())
        throw DimensionMismatch("mesh: vertex_colors length mismatch");
    if (!face_labels.empty() && face_labels.size() != faces.size())
        throw DimensionMismatch("mesh: face_labels length mismatch");
}

bool TriangleMesh::is_watertight() const {
    if (faces.empty()) return false;
    // Count directed edges; watertight two-manifold means every directed
    // edge appears exactly once and its opposite exactly once.
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> count;
    for (const auto& t : faces) {
        for (int e = 0; e < 3; ++e) {
            const std::uint32_t a = t[e], b = t[(e + 1) % 3];
            if (++count[{a, b}] > 1) return false;
        }
    }
    for (const auto& [edge, c] : count) {
        auto it = count.find({edge.second, edge.first});
        if (it == count.end() || it->second != 1) return false;
    }
    return true;
}

Aabb TriangleMesh::bounds() const {
    Aabb box;
    for (const auto& p : vertices) box.expand(Vec3d(p));
    return box;
}

std::vector<Vec3f> TriangleMesh::vertex_normals() const {
    std::vector<Vec3d> acc(vertices.size(), Vec3d{0, 0, 0});
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        const Vec3d a(vertices[t[0]]), b(vertices[t[1]]), c(vertices[t[2]]);
        const Vec3d an = (b - a).cross(c - a);  // area-weighted
        acc[t[0]] += an;
        acc[t[1]] += an;
        acc[t[2]] += an;
    }
    std::vector<Vec3f> out(vertices.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = Vec3f(acc[i].normalized(1e-30));
    return out;
}

}  // namespace spav
