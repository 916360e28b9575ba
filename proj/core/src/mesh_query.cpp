#include "spav/mesh_query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spav/threading.hpp"

namespace spav {

Vec3d closest_point_on_triangle(const Vec3d& p, const Vec3d& a, const Vec3d& b, const Vec3d& c) {
    const Vec3d ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;

    const Vec3d bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));

    const Vec3d cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

MeshQuery::MeshQuery(const TriangleMesh& mesh) : mesh_(&mesh) {
    if (mesh.face_count() == 0) throw EmptyMesh("mesh query: no faces");
    order_.resize(mesh.face_count());
    centroids_.resize(mesh.face_count());
    for (std::uint32_t f = 0; f < mesh.face_count(); ++f) {
        order_[f] = f;
        const auto& t = mesh.faces[f];
        centroids_[f] = (Vec3d(mesh.vertices[t[0]]) + Vec3d(mesh.vertices[t[1]]) +
                         Vec3d(mesh.vertices[t[2]])) / 3.0;
    }
    nodes_.reserve(2 * mesh.face_count() / 4 + 2);
    nodes_.emplace_back();
    build(0, 0, static_cast<std::uint32_t>(mesh.face_count()));
}

void MeshQuery::build(std::uint32_t node, std::uint32_t begin, std::uint32_t end) {
    Aabb bounds;
    for (std::uint32_t i = begin; i < end; ++i) {
        const auto& t = mesh_->faces[order_[i]];
        for (int e = 0; e < 3; ++e) bounds.expand(Vec3d(mesh_->vertices[t[e]]));
    }
    nodes_[node].bounds = bounds;
    nodes_[node].begin = begin;
    nodes_[node].end = end;
    if (end - begin <= 4) return;

    const Vec3d ext = bounds.extent();
    int axis = 0;
    if (ext.y > ext.x) axis = 1;
    if (ext.z > ext[axis]) axis = 2;
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t fa, std::uint32_t fb) {
                         const double ca = centroids_[fa][axis], cb = centroids_[fb][axis];
                         return ca < cb || (ca == cb && fa < fb);
                     });
    const std::int32_t left = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[node].left = left;
    nodes_[node].right = left + 1;
    build(left, begin, mid);
    build(left + 1, mid, end);
}

MeshQuery::Hit MeshQuery::nearest(const Vec3d& p) const {
    Hit best;
    best.distance = std::numeric_limits<double>::infinity();

    struct Entry { std::int32_t node; double d2; };
    Entry stack[128];
    int top = 0;
    stack[top++] = {0, 0.0};
    while (top > 0) {
        const Entry e = stack[--top];
        if (e.d2 >= best.distance * best.distance) continue;
        const Node& n = nodes_[e.node];
        if (n.left < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::uint32_t f = order_[i];
                const auto& t = mesh_->faces[f];
                const Vec3d q = closest_point_on_triangle(p, Vec3d(mesh_->vertices[t[0]]),
                                                          Vec3d(mesh_->vertices[t[1]]),
                                                          Vec3d(mesh_->vertices[t[2]]));
                const double d = (p - q).norm();
                if (d < best.distance || (d == best.distance && f < best.face)) {
                    best.distance = d;
                    best.face = f;
                    best.closest = q;
                }
            }
            continue;
        }
        const double dl = nodes_[n.left].bounds.squared_distance(p);
        const double dr = nodes_[n.right].bounds.squared_distance(p);
        // Nearer child on top of the stack.
        if (dl < dr) {
            stack[top++] = {n.right, dr};
            stack[top++] = {n.left, dl};
        } else {
            stack[top++] = {n.left, dl};
            stack[top++] = {n.right, dr};
        }
    }
    return best;
}

std::vector<std::uint8_t> voxelize_interior(const TriangleMesh& mesh, const GridLayout& layout) {
    const int r = layout.resolution;
    std::vector<std::uint8_t> inside(layout.node_count(), 0);

    // Bin triangles over (y, z) rows they can intersect.
    const double h = layout.spacing;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(r) * r);
    for (std::uint32_t f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        Aabb bb;
        for (int e = 0; e < 3; ++e) bb.expand(Vec3d(mesh.vertices[t[e]]));
        const int j0 = std::clamp(static_cast<int>(std::floor((bb.lo.y - layout.origin.y) / h)), 0, r - 1);
        const int j1 = std::clamp(static_cast<int>(std::floor((bb.hi.y - layout.origin.y) / h)) + 1, 0, r - 1);
        const int k0 = std::clamp(static_cast<int>(std::floor((bb.lo.z - layout.origin.z) / h)), 0, r - 1);
        const int k1 = std::clamp(static_cast<int>(std::floor((bb.hi.z - layout.origin.z) / h)) + 1, 0, r - 1);
        for (int k = k0; k <= k1; ++k)
            for (int j = j0; j <= j1; ++j) bins[static_cast<std::size_t>(k) * r + j].push_back(f);
    }

    // Rays at voxel centers, slightly off the lattice to dodge edge hits.
    const double off_y = 0.5 + 9.5367431640625e-05;
    const double off_z = 0.5 + 6.103515625e-05;

    parallel_for(static_cast<std::size_t>(r) * r, [&](std::size_t row0, std::size_t row1) {
        std::vector<double> crossings;
        for (std::size_t row = row0; row < row1; ++row) {
            const int k = static_cast<int>(row) / r;
            const int j = static_cast<int>(row) % r;
            const double y = layout.origin.y + (j + off_y) * h;
            const double z = layout.origin.z + (k + off_z) * h;
            crossings.clear();
            for (const std::uint32_t f : bins[row]) {
                const auto& t = mesh.faces[f];
                const Vec3d a(mesh.vertices[t[0]]), b(mesh.vertices[t[1]]), c(mesh.vertices[t[2]]);
                // Ray along +x from x = -inf: intersect with the triangle in
                // the (y, z) plane, solve for x by barycentric interpolation.
                const double ay = a.y - y, az = a.z - z;
                const double by = b.y - y, bz = b.z - z;
                const double cy = c.y - y, cz = c.z - z;
                const double d0 = by * cz - bz * cy;
                const double d1 = cy * az - cz * ay;
                const double d2 = ay * bz - az * by;
                const double sum = d0 + d1 + d2;
                if (sum == 0.0) continue;
                const bool pos = sum > 0;
                if ((d0 > 0) != pos || (d1 > 0) != pos || (d2 > 0) != pos) continue;
                crossings.push_back((d0 * a.x + d1 * b.x + d2 * c.x) / sum);
            }
            std::sort(crossings.begin(), crossings.end());
            // Parity fill across the row of voxel centers.
            std::size_t c_idx = 0;
            bool in = false;
            for (int i = 0; i < r; ++i) {
                const double x = layout.origin.x + (i + 0.5) * h;
                while (c_idx < crossings.size() && crossings[c_idx] <= x) {
                    in = !in;
                    ++c_idx;
                }
                if (in) inside[(static_cast<std::size_t>(k) * r + j) * r + i] = 1;
            }
        }
    }, 8);
    return inside;
}

}  // namespace spav
