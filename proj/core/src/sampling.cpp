#include "spav/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "spav/rng.hpp"

namespace spav {

OrientedPointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed,
                                  std::vector<std::uint32_t>& face_out) {
    if (mesh.face_count() == 0) throw EmptyMesh("sample_surface: mesh has no faces");
    if (n == 0) throw Error("sample_surface: n must be >= 1");

    // Cumulative area table for the face draw.
    std::vector<double> cumulative(mesh.face_count());
    double total = 0;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        total += mesh.face_area(f);
        cumulative[f] = total;
    }
    if (total <= 0) throw EmptyMesh("sample_surface: mesh has zero area");

    Rng rng(seed);
    OrientedPointCloud cloud;
    cloud.positions.resize(n);
    cloud.normals.resize(n);
    if (mesh.has_vertex_colors()) cloud.colors.resize(n);
    face_out.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const double r = rng.uniform() * total;
        const std::size_t f = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
        const auto& t = mesh.faces[std::min(f, mesh.face_count() - 1)];

        // Uniform barycentric via the sqrt trick.
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        const double b0 = 1.0 - su, b1 = su * (1.0 - v), b2 = su * v;

        const Vec3d p0(mesh.vertices[t[0]]), p1(mesh.vertices[t[1]]), p2(mesh.vertices[t[2]]);
        cloud.positions[i] = Vec3f(p0 * b0 + p1 * b1 + p2 * b2);
        cloud.normals[i] = Vec3f(mesh.face_normal(std::min(f, mesh.face_count() - 1)));
        if (mesh.has_vertex_colors()) {
            const Vec3d c0(mesh.vertex_colors[t[0]]), c1(mesh.vertex_colors[t[1]]), c2(mesh.vertex_colors[t[2]]);
            cloud.colors[i] = Vec3f(c0 * b0 + c1 * b1 + c2 * b2);
        }
        face_out[i] = static_cast<std::uint32_t>(std::min(f, mesh.face_count() - 1));
    }
    return cloud;
}

OrientedPointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> faces;
    return sample_surface(mesh, n, seed, faces);
}

}  // namespace spav
