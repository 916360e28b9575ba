#pragma once

#include <memory>
#include <optional>

#include "spav/autodiff.hpp"
#include "spav/checkpoint.hpp"
#include "spav/nn.hpp"
#include "spav/pointcloud.hpp"
#include "spav/skeleton.hpp"

namespace spav {

// Architecture knobs. Paper-scale defaults; the desk preset narrows widths.
struct NetSizes {
    int deltanet_depth = 8;
    int deltanet_width = 512;
    int deltanet_skip = 4;  // hidden layer that re-reads the input
    int lbsnet_depth = 5;
    int lbsnet_width = 128;
    int encoder_width = 64;
    int pose_code_dim = 16;
    int pe_levels = 4;
};

struct DeformationConfig {
    double softmax_scale = 20.0;
    // Evaluate the weight field at the canonical position x_c instead of the
    // sampled template position x (ablation switch).
    bool lbs_input_canonical = false;
    // Optional grouped mode: weights factor into a softmax over kinematic
    // groups (root plus each subtree under it) times a softmax within the
    // group, both at softmax_scale.
    bool hierarchical_softmax = false;
    int pe_levels = 4;
    int pose_code_dim = 16;
};

// DeltaNet + LBSNet + pose encoder with their skeleton context.
struct DeformationModel {
    Skeleton skeleton;
    PoseParams template_pose;
    std::size_t expression_dim = 10;
    DeformationConfig config;
    Mlp deltanet;      // concat(PE(x), pose code) -> (delta, theta)
    Mlp lbsnet;        // PE(x) -> bone logits
    Mlp pose_encoder;  // non-root pose angles + expression -> pose code

    static DeformationModel init(const Skeleton& skeleton, const PoseParams& template_pose,
                                 std::size_t expression_dim, const NetSizes& sizes, Rng& rng);

    std::size_t bone_count() const { return skeleton.bone_count(); }
    std::int64_t pose_input_dim() const {
        return static_cast<std::int64_t>((bone_count() - 1) * 3 + expression_dim);
    }

    std::vector<Tensor*> parameters();
    std::vector<Tensor*> deltanet_parameters();  // deltanet + pose encoder
    std::vector<Tensor*> lbsnet_parameters();
    void zero_grad();

    void save(Checkpoint& ck, const std::string& prefix = "deform.") const;
    static DeformationModel load(const Checkpoint& ck, const std::string& prefix = "deform.");
};

struct DeformOptions {
    bool force_zero_delta = false;                     // test/ablation hook
    const SkinningWeights* inject_weights = nullptr;   // ground-truth weights
    bool differentiable_inputs = false;                // track d/d(points)
    // Early-training schedule: evaluate the weight field but block loss
    // gradients through the blend, so the field learns only from its own
    // supervision until the geometry stabilizes.
    bool detach_weights = false;
};

// Live graph over one batch. Node ids stay valid for seeding gradients.
struct DeformGraph {
    Tape tape;
    std::int64_t count = 0;
    Tape::NodeId points = -1;   // template positions [n,3]
    Tape::NodeId delta = -1;    // [n,3]
    Tape::NodeId theta = -1;    // [n,3]
    Tape::NodeId canonical_positions = -1;
    Tape::NodeId canonical_normals = -1;
    Tape::NodeId weights = -1;  // [n, N_b]
    Tape::NodeId posed_positions = -1;
    Tape::NodeId posed_normals = -1;

    std::vector<Vec3d> values3(Tape::NodeId id) const;
    std::vector<double> matrix(Tape::NodeId id) const;
};

// Plain snapshot of a deformed batch.
struct DeformedBatch {
    std::vector<Vec3d> delta, theta;
    std::vector<Vec3d> canonical_positions, canonical_normals;
    std::vector<Vec3d> posed_positions, posed_normals;
    SkinningWeights weights;
};

// Training entry: builds the full template -> canonical -> pose graph.
DeformGraph deform_graph(const DeformationModel& model, const std::vector<Vec3d>& positions,
                         const std::vector<Vec3d>& normals, const PoseParams& pose,
                         const DeformOptions& options = {});

// Builds only the weight-field subgraph at the given positions (used by the
// regularization term); returns the weights node.
Tape::NodeId lbs_weights_graph(const DeformationModel& model, Tape& tape,
                               const std::vector<Vec3d>& positions);

// --- plain (non-graph) operation surface ---

// (delta, theta) per point for a pose.
std::pair<std::vector<Vec3d>, std::vector<Vec3d>> delta_forward(const DeformationModel& model,
                                                                const OrientedPointCloud& points,
                                                                const PoseParams& pose);

// x + delta, normals rotated by R(theta).
OrientedPointCloud apply_delta(const OrientedPointCloud& points, const std::vector<Vec3d>& delta,
                               const std::vector<Vec3d>& theta);

// Skinning weight field rows at the given positions.
SkinningWeights lbs_weights(const DeformationModel& model, const std::vector<Vec3f>& positions);

// Full pipeline snapshot.
DeformedBatch deform(const DeformationModel& model, const OrientedPointCloud& points,
                     const PoseParams& pose, const DeformOptions& options = {});

}  // namespace spav
