#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spav/pointcloud.hpp"
#include "spav/skeleton.hpp"

namespace spav {

// Part taxonomy used for semantic transfer and composition.
enum class PartLabel : std::uint8_t {
    Head = 0,
    Body = 1,
    LeftArm = 2,
    RightArm = 3,
    LeftHand = 4,
    RightHand = 5,
    LeftLeg = 6,
    RightLeg = 7,
};
constexpr std::size_t kPartCount = 8;
const char* part_name(PartLabel label);
PartLabel part_from_name(const std::string& name);

struct SubjectParams {
    int mesh_resolution = 64;        // marching-cubes lattice for the body
    double bump_amplitude = 0.008;   // m, pose-dependent clothing bumps
    double bump_frequency = 55.0;    // rad/m
    double weight_sharpness = 40.0;  // 1/m falloff of ground-truth weights
    double pose_range = 0.55;        // radians, joint-limit scale
    std::size_t expression_dim = 10;
};

// Capsule-limb body with ground-truth skinning weights, per-part two-tone
// colors, and procedurally bumped posed scans. Everything derives
// deterministically from the seed.
struct SyntheticSubject {
    std::uint64_t seed = 0;
    SubjectParams params;
    Skeleton skeleton;
    PoseParams template_pose;
    TriangleMesh template_mesh;  // rest pose; vertex colors + face labels
    std::vector<std::uint8_t> vertex_labels;
    SkinningWeights vertex_weights;  // ground truth w* at template vertices
    std::vector<PoseParams> poses;   // poses[0] is the rest/template pose
    std::vector<TriangleMesh> scans; // posed scans, same connectivity as template

    std::size_t pose_count() const { return poses.size(); }

    // LBS-only posing with the ground-truth weights (no bump): the
    // self-consistency oracle for the stored scans.
    TriangleMesh pose_rigid(std::size_t pose_index) const;

    // Pose-dependent bump field magnitude (0 at the rest pose).
    double bump_gain(const PoseParams& pose) const;
};

SyntheticSubject generate_subject(std::uint64_t seed, std::size_t pose_count,
                                  const SubjectParams& params = {});

// Directory layout: skeleton.json, template.ply, vertex_labels.txt,
// weights.spav, poses/pose_###.json, scans/scan_###.ply, subject.json.
void save_subject(const SyntheticSubject& subject, const std::filesystem::path& dir);
SyntheticSubject load_subject(const std::filesystem::path& dir);

}  // namespace spav
