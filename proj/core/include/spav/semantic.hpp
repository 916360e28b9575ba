#pragma once

#include <filesystem>
#include <set>
#include <span>

#include "spav/deformation.hpp"
#include "spav/pointcloud.hpp"
#include "spav/synthetic.hpp"

namespace spav {

// Template mesh with per-face parts and per-vertex reference weights.
struct LabeledTemplateMesh {
    TriangleMesh mesh;  // face_labels filled
    std::vector<std::uint8_t> vertex_labels;
    SkinningWeights vertex_weights;  // reference w*; may be empty

    void validate() const;
};

// Face labels from vertex labels: majority vote, ties to the lowest value.
LabeledTemplateMesh label_faces(const TriangleMesh& mesh,
                                const std::vector<std::uint8_t>& per_vertex_labels);

// One int label (0-7) per line, matching vertex order.
std::vector<std::uint8_t> read_vertex_labels(const std::filesystem::path& path,
                                             std::size_t expected_count);

// Points pinned to template faces: barycentric coordinates plus an offset
// along the face normal. Labels are inherited from faces and never change.
// `source` routes each point to its deformation model after composition.
struct SemanticPointSet {
    std::vector<std::uint32_t> face_index;
    std::vector<Vec3d> barycentric;     // rows on the simplex
    std::vector<double> normal_offset;  // meters along the face normal
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> source;          // template/model id per point
    std::vector<std::uint8_t> feature_source;  // decoder id per point
    std::size_t feature_dim = 16;
    std::vector<double> features;       // empty until appearance training
    std::vector<Vec3f> positions;       // cached world state (template space)
    std::vector<Vec3f> normals;

    std::size_t size() const { return face_index.size(); }
    bool has_features() const { return !features.empty(); }
    void validate() const;

    // Recomputes cached positions/normals from the attachments.
    void refresh_cache(std::span<const TriangleMesh* const> templates);
    void refresh_cache(const TriangleMesh& single_template);
};

// Area-weighted sampling with uniform barycentric draws, zero offsets, and
// inherited labels. Deterministic per seed.
SemanticPointSet sample_semantic(const LabeledTemplateMesh& template_mesh, std::size_t n,
                                 std::uint64_t seed);

struct AlignConfig {
    int iterations = 400;
    double learning_rate = 1e-2;
    double chamfer_weight = 5000.0;
    double emd_weight = 5000.0;
    std::size_t emd_points = 1024;  // fixed matched subset
    int emd_refresh = 10;           // iterations between matching refreshes
    double max_normal_offset = 0.05;  // m, keeps points near their face
    double converged_chamfer = 1e-4;  // warn above this (scene units^2)
    std::uint64_t seed = 0;
    std::int64_t auction_max_bids = 200000;
};

struct AlignStats {
    std::vector<double> chamfer_history;
    double final_chamfer = 0;
    bool converged = true;  // false triggers the NotConverged warning path
};

// Optimizes each point's local coordinates (barycentric + normal offset)
// against Chamfer + EMD to the template scan. Face attachments and labels
// are fixed; barycentric rows are re-projected onto the simplex each step.
AlignStats align_to_template_scan(SemanticPointSet& points, const LabeledTemplateMesh& template_mesh,
                                  const OrientedPointCloud& template_scan,
                                  const AlignConfig& config = {});

// World positions/normals from the attachments, deformed to the pose.
// Labels ride along unchanged. Models/templates are indexed by source id.
OrientedPointCloud repose_semantic(const SemanticPointSet& points,
                                   std::span<const TriangleMesh* const> templates,
                                   std::span<const DeformationModel* const> models,
                                   const PoseParams& pose, std::vector<std::uint8_t>* labels_out = nullptr);
OrientedPointCloud repose_semantic(const SemanticPointSet& points, const TriangleMesh& template_mesh,
                                   const DeformationModel& model, const PoseParams& pose,
                                   std::vector<std::uint8_t>* labels_out = nullptr);

// PLY with face_index/b0/b1/b2/noff/label/source vertex properties.
void write_semantic_ply(const SemanticPointSet& points, const std::filesystem::path& path);
SemanticPointSet read_semantic_ply(const std::filesystem::path& path);

// Checkpoint sections under the given prefix (attachments + features).
void save_semantic(const SemanticPointSet& points, Checkpoint& ck, const std::string& prefix = "semantic.");
SemanticPointSet load_semantic(const Checkpoint& ck, const std::string& prefix = "semantic.");

}  // namespace spav
