#include "spav/marching_cubes.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace spav {

namespace {

const int kVertexOffset[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

const int kEdgeVertices[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0},
    {4, 5}, {5, 6}, {6, 7}, {7, 4},
    {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

// Unique key for a lattice edge: endpoint node id + axis-ish direction slot.
inline std::uint64_t edge_key(std::uint64_t node_a, std::uint64_t node_b) {
    if (node_a > node_b) std::swap(node_a, node_b);
    return node_a * 0x100000000ull ^ node_b;
}

}  // namespace

TriangleMesh marching_cubes(const ScalarGrid& field, double iso) {
    const int r = field.layout.resolution;
    if (r < 32) throw Error("marching_cubes: resolution below 32");

    const auto [mn, mx] = std::minmax_element(field.values.begin(), field.values.end());
    if (iso <= *mn || iso >= *mx)
        throw EmptySurface("marching_cubes: iso " + std::to_string(iso) + " outside field range [" +
                           std::to_string(*mn) + ", " + std::to_string(*mx) + "]");

    TriangleMesh mesh;
    std::unordered_map<std::uint64_t, std::uint32_t> edge_cache;
    edge_cache.reserve(1 << 16);

    auto node_id = [&](int i, int j, int k) -> std::uint64_t {
        return (static_cast<std::uint64_t>(k) * r + j) * r + i;
    };

    double corner[8];
    std::uint64_t corner_id[8];
    Vec3d corner_pos[8];
    std::uint32_t edge_vertex[12];

    for (int k = 0; k + 1 < r; ++k) {
        for (int j = 0; j + 1 < r; ++j) {
            for (int i = 0; i + 1 < r; ++i) {
                int cube_index = 0;
                for (int c = 0; c < 8; ++c) {
                    const int ci = i + kVertexOffset[c][0];
                    const int cj = j + kVertexOffset[c][1];
                    const int ck = k + kVertexOffset[c][2];
                    corner[c] = field.at(ci, cj, ck);
                    corner_id[c] = node_id(ci, cj, ck);
                    corner_pos[c] = field.layout.position(ci, cj, ck);
                    if (corner[c] < iso) cube_index |= 1 << c;
                }
                const std::uint16_t edges = kMcEdgeTable[cube_index];
                if (edges == 0) continue;

                for (int e = 0; e < 12; ++e) {
                    if (!(edges & (1 << e))) continue;
                    const int a = kEdgeVertices[e][0], b = kEdgeVertices[e][1];
                    const std::uint64_t key = edge_key(corner_id[a], corner_id[b]);
                    auto it = edge_cache.find(key);
                    if (it != edge_cache.end()) {
                        edge_vertex[e] = it->second;
                        continue;
                    }
                    const double va = corner[a], vb = corner[b];
                    const double t = std::clamp((iso - va) / (vb - va), 0.0, 1.0);
                    const Vec3d p = corner_pos[a] + (corner_pos[b] - corner_pos[a]) * t;
                    const std::uint32_t idx = static_cast<std::uint32_t>(mesh.vertices.size());
                    mesh.vertices.push_back(Vec3f(p));
                    edge_cache.emplace(key, idx);
                    edge_vertex[e] = idx;
                }

                const std::int8_t* tri = kMcTriTable[cube_index];
                for (int t = 0; tri[t] != -1; t += 3) {
                    // Reversed emission: normals face the value >= iso side,
                    // outward for fields that grow along the surface normals.
                    const std::uint32_t v0 = edge_vertex[tri[t]];
                    const std::uint32_t v1 = edge_vertex[tri[t + 2]];
                    const std::uint32_t v2 = edge_vertex[tri[t + 1]];
                    if (v0 == v1 || v1 == v2 || v0 == v2) continue;  // collapsed at clamp
                    mesh.faces.push_back({v0, v1, v2});
                }
            }
        }
    }
    if (mesh.faces.empty()) throw EmptySurface("marching_cubes: no surface crossings");
    return mesh;
}

}  // namespace spav
