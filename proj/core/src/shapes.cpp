#include "spav/shapes.hpp"

#include <cmath>
#include <cstdint>
#include <map>

namespace spav {

TriangleMesh make_icosphere(const Vec3d& center, double radius, int subdivisions) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3d> verts = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    std::vector<std::array<std::uint32_t, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (auto& v : verts) v = v.normalized();

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) -> std::uint32_t {
            auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const std::uint32_t idx = static_cast<std::uint32_t>(verts.size());
            verts.push_back(((verts[a] + verts[b]) * 0.5).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<std::uint32_t, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const std::uint32_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    TriangleMesh mesh;
    mesh.vertices.reserve(verts.size());
    for (const auto& v : verts) mesh.vertices.push_back(Vec3f(center + v * radius));
    mesh.faces = std::move(faces);
    return mesh;
}

TriangleMesh make_box(const Vec3d& lo, const Vec3d& hi) {
    TriangleMesh m;
    const double xs[2] = {lo.x, hi.x}, ys[2] = {lo.y, hi.y}, zs[2] = {lo.z, hi.z};
    for (int i = 0; i < 8; ++i)
        m.vertices.push_back(Vec3f(Vec3d{xs[i & 1], ys[(i >> 1) & 1], zs[(i >> 2) & 1]}));
    // Each quad split into two triangles, outward winding.
    const std::uint32_t quads[6][4] = {
        {0, 2, 6, 4},  // x = lo
        {1, 5, 7, 3},  // x = hi
        {0, 4, 5, 1},  // y = lo
        {2, 3, 7, 6},  // y = hi
        {0, 1, 3, 2},  // z = lo
        {4, 6, 7, 5},  // z = hi
    };
    for (const auto& q : quads) {
        m.faces.push_back({q[0], q[1], q[2]});
        m.faces.push_back({q[0], q[2], q[3]});
    }
    return m;
}

TriangleMesh make_unit_quad() {
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

}  // namespace spav
