#pragma once

#include <cstdint>
#include <vector>

#include "spav/error.hpp"
#include "spav/pointcloud.hpp"
#include "spav/vec.hpp"

namespace spav {

// Cubic periodic lattice: resolution nodes per axis at spacing h, node (i,j,k)
// at origin + h*(i,j,k). Resolution is a power of two in [32, 512].
struct GridLayout {
    int resolution = 128;
    Vec3d origin{0, 0, 0};
    double spacing = 1.0;

    std::size_t node_count() const {
        const std::size_t r = static_cast<std::size_t>(resolution);
        return r * r * r;
    }
    std::size_t index(int i, int j, int k) const {
        const std::size_t r = static_cast<std::size_t>(resolution);
        return (static_cast<std::size_t>(k) * r + static_cast<std::size_t>(j)) * r +
               static_cast<std::size_t>(i);
    }
    Vec3d position(int i, int j, int k) const {
        return origin + Vec3d{i * spacing, j * spacing, k * spacing};
    }
    double domain_length() const { return spacing * resolution; }

    static void validate_resolution(int r);

    // Cubic box around the cloud, side = padding * max extent.
    static GridLayout fit(const Aabb& bounds, int resolution, double padding = 1.2);
};

struct ScalarGrid {
    GridLayout layout;
    std::vector<double> values;

    ScalarGrid() = default;
    explicit ScalarGrid(const GridLayout& l) : layout(l), values(l.node_count(), 0.0) {}

    double& at(int i, int j, int k) { return values[layout.index(i, j, k)]; }
    double at(int i, int j, int k) const { return values[layout.index(i, j, k)]; }

    // Trilinear interpolation; clamps to the node lattice.
    double sample(const Vec3d& p) const;
};

struct VectorGrid {
    GridLayout layout;
    std::vector<double> x, y, z;

    VectorGrid() = default;
    explicit VectorGrid(const GridLayout& l)
        : layout(l), x(l.node_count(), 0.0), y(l.node_count(), 0.0), z(l.node_count(), 0.0) {}
};

}  // namespace spav
