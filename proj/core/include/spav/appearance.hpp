#pragma once

#include <span>

#include "spav/checkpoint.hpp"
#include "spav/kdtree.hpp"
#include "spav/nn.hpp"
#include "spav/pointcloud.hpp"
#include "spav/semantic.hpp"

namespace spav {

// Color autoencoder with a decoder that is frozen once pretraining ends.
struct AppearanceModel {
    Autoencoder autoencoder;
    int feature_dim = 16;
    bool decoder_frozen = false;

    // Hash over the serialized decoder parameters (freeze witness).
    std::uint64_t decoder_hash() const;

    void save(Checkpoint& ck, const std::string& prefix = "appearance.") const;
    static AppearanceModel load(const Checkpoint& ck, const std::string& prefix = "appearance.");
};

struct AppearanceSizes {
    int feature_dim = 16;
    int encoder_depth = 3;
    int decoder_depth = 8;
    int width = 256;  // desk preset narrows this
};

struct PretrainStats {
    std::vector<double> loss_history;  // per epoch mean squared error
};

// Minimizes mean squared reconstruction error over the color set with Adam.
AppearanceModel pretrain_autoencoder(std::span<const Vec3f> colors, int epochs, double learning_rate,
                                     std::uint64_t seed, const AppearanceSizes& sizes = {},
                                     PretrainStats* stats = nullptr);

// IDW feature aggregation over the k nearest semantic points. Weights are
// 1/(d + 1e-8); an exact hit (d < 1e-12) returns that feature directly.
// raw_distance_weights reproduces the plain distance-weighted variant.
std::vector<double> aggregate_feature(const Vec3d& query, const KdIndex& posed_index,
                                      std::span<const double> features, std::size_t feature_dim,
                                      std::size_t k, bool raw_distance_weights = false);

struct FeatureTrainConfig {
    int epochs = 20;
    double learning_rate = 1e-3;
    std::size_t samples_per_pose = 2048;
    std::size_t k = 8;
    std::uint64_t seed = 0;
    bool raw_distance_weights = false;
};

struct FeatureTrainStats {
    std::vector<double> loss_history;  // per epoch mean color MSE
    double initial_loss = 0;
};

// Optimizes per-point features against scan colors across poses; geometry
// and decoder stay fixed. posed_clouds[i] are the semantic points deformed
// to pose i (frozen geometry); scans provide the color supervision.
FeatureTrainStats train_features(const AppearanceModel& model, SemanticPointSet& points,
                                 std::span<const OrientedPointCloud> posed_semantic,
                                 std::span<const TriangleMesh> scans,
                                 const FeatureTrainConfig& config);

// Decoded IDW colors for every mesh vertex, clamped to [0,1].
TriangleMesh color_mesh(const TriangleMesh& mesh, const OrientedPointCloud& posed_semantic,
                        const SemanticPointSet& points, const AppearanceModel& model, std::size_t k);

// Composite variant: neighbors are grouped by feature_source, each group's
// aggregate decodes through its own model, and the group colors blend by
// their IDW mass. Reduces to color_mesh when every point shares one source.
TriangleMesh color_mesh_multi(const TriangleMesh& mesh, const OrientedPointCloud& posed_semantic,
                              const SemanticPointSet& points,
                              std::span<const AppearanceModel* const> models, std::size_t k);

// Each semantic point's own feature decoded through its own model.
std::vector<Vec3f> decode_point_colors(const SemanticPointSet& points,
                                       std::span<const AppearanceModel* const> models);

}  // namespace spav
