#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spav/pointcloud.hpp"
#include "spav/vec.hpp"

namespace spav {

// Kinematic tree. Bone 0 is the root; rest_offsets[i] is the translation
// from the parent joint to joint i in the rest configuration.
struct Skeleton {
    std::vector<std::optional<std::uint32_t>> parent;  // nullopt for the root
    std::vector<Vec3d> rest_offsets;
    std::vector<std::string> names;

    std::size_t bone_count() const { return parent.size(); }
    int find_bone(const std::string& name) const;

    // Acyclic parents, exactly one root, parents precede children.
    void validate() const;
};

// Per-bone Euler-angle pose plus expression coefficients.
struct PoseParams {
    std::vector<Vec3d> body_pose;    // radians, length == bone_count
    std::vector<double> expression;  // default dimension 10

    static PoseParams rest(std::size_t bone_count, std::size_t expr_dim = 10) {
        PoseParams p;
        p.body_pose.assign(bone_count, Vec3d{0, 0, 0});
        p.expression.assign(expr_dim, 0.0);
        return p;
    }
};

// Posed and template-pose bone transforms.
struct BoneTransforms {
    std::vector<Transform> posed;      // B_i
    std::vector<Transform> canonical;  // B_i at the template pose

    std::size_t bone_count() const { return posed.size(); }

    // B_i * (B_i^c)^-1, the per-bone skinning motion.
    std::vector<Transform> skinning_motions() const;
};

// Row-stochastic per-point weights over bones.
struct SkinningWeights {
    std::size_t bone_count = 0;
    std::vector<double> values;  // row-major [point][bone]

    std::size_t point_count() const { return bone_count == 0 ? 0 : values.size() / bone_count; }
    double* row(std::size_t i) { return values.data() + i * bone_count; }
    const double* row(std::size_t i) const { return values.data() + i * bone_count; }

    static SkinningWeights one_hot(std::size_t points, std::size_t bones, std::uint32_t bone);
    void validate(double tol = 1e-5) const;  // nonneg, rows sum to 1
};

// R = Rz(g) * Ry(b) * Rx(a): intrinsic rotation about x, then y, then z.
Mat3d euler_to_rotation(const Vec3d& angles);

// Composes B_i = B_parent * T(rest_offset_i) * R(theta_i) root to leaf,
// and the same at the template pose.
BoneTransforms forward_kinematics(const Skeleton& skel, const PoseParams& pose,
                                  const PoseParams& template_pose);

// Linear blend skinning of positions and normals. Normals use the linear
// part of the blended motion and are renormalized.
OrientedPointCloud lbs_apply(const OrientedPointCloud& points, const SkinningWeights& weights,
                             const BoneTransforms& bt);

// f64 core shared by lbs_apply and the training path.
void lbs_apply_raw(const std::vector<Vec3d>& positions, const std::vector<Vec3d>& normals,
                   const SkinningWeights& weights, const std::vector<Transform>& motions,
                   std::vector<Vec3d>& out_positions, std::vector<Vec3d>& out_normals);

// forward_kinematics + lbs_apply through canonical space.
OrientedPointCloud canonical_to_pose(const OrientedPointCloud& points, const SkinningWeights& weights,
                                     const Skeleton& skel, const PoseParams& pose,
                                     const PoseParams& template_pose);

// JSON serialization: {"bones":[{"name","parent","offset":[x,y,z]}]}
void write_skeleton_json(const Skeleton& skel, const std::filesystem::path& path);
Skeleton read_skeleton_json(const std::filesystem::path& path);
std::string skeleton_to_json(const Skeleton& skel);
Skeleton skeleton_from_json(const std::string& text);

// Pose files: {"body_pose":[[x,y,z],...], "expression":[...]}
void write_pose_json(const PoseParams& pose, const std::filesystem::path& path);
PoseParams read_pose_json(const std::filesystem::path& path);
std::string pose_to_json(const PoseParams& pose);
PoseParams pose_from_json(const std::string& text);

}  // namespace spav
