#pragma once

#include <filesystem>
#include <optional>

#include "spav/pointcloud.hpp"

namespace spav {

// Mesh-to-mesh geometric report. Distances in millimeters; NC is mean
// normal cosine; IoU is volumetric (absent for open meshes). Hand columns
// need face labels on the ground-truth mesh.
struct EvalReport {
    double cd = 0;       // mean symmetric point-to-surface distance, mm
    double cd_max = 0;   // max such distance, mm
    double nc = 0;       // in [-1, 1]
    std::optional<double> iou;  // in [0, 1]
    std::optional<double> cd_hands;
    std::optional<double> cd_max_hands;
    std::optional<double> nc_hands;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
    void validate() const;
};

struct EvalConfig {
    std::size_t samples = 20000;  // per direction
    int iou_resolution = 128;
    std::uint64_t seed = 20240901;
};

// Dense-sample metrics against the exact nearest surface point (triangle
// BVH). IoU voxelizes both meshes over their union box with a parity test.
EvalReport evaluate(const TriangleMesh& predicted, const TriangleMesh& ground_truth,
                    const EvalConfig& config = {});

}  // namespace spav
