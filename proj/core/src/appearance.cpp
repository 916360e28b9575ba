#include "spav/appearance.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "spav/rng.hpp"
#include "spav/sampling.hpp"

namespace spav {

namespace {

// FNV-1a over bytes.
std::uint64_t hash_bytes(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

std::uint64_t AppearanceModel::decoder_hash() const {
    Checkpoint ck;
    for (std::size_t l = 0; l < autoencoder.decoder.weights.size(); ++l) {
        const auto& w = autoencoder.decoder.weights[l];
        ck.add_f32("w" + std::to_string(l), w.values,
                   {static_cast<std::uint64_t>(w.rows()), static_cast<std::uint64_t>(w.cols())});
        const auto& b = autoencoder.decoder.biases[l];
        ck.add_f32("b" + std::to_string(l), b.values, {1, static_cast<std::uint64_t>(b.cols())});
    }
    const auto bytes = ck.serialize();
    return hash_bytes(bytes);
}

AppearanceModel pretrain_autoencoder(std::span<const Vec3f> colors, int epochs, double learning_rate,
                                     std::uint64_t seed, const AppearanceSizes& sizes,
                                     PretrainStats* stats) {
    if (colors.empty()) throw EmptyTrainingSet("pretrain_autoencoder: no colors");
    Rng rng(seed);
    AppearanceModel model;
    model.feature_dim = sizes.feature_dim;
    model.autoencoder =
        Autoencoder::init(sizes.feature_dim, sizes.encoder_depth, sizes.decoder_depth, sizes.width, rng);

    auto params = model.autoencoder.encoder.parameters();
    for (Tensor* p : model.autoencoder.decoder.parameters()) params.push_back(p);
    AdamState adam(learning_rate);

    const std::size_t batch = std::min<std::size_t>(colors.size(), 256);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < colors.size(); start += batch) {
            const std::size_t count = std::min(batch, colors.size() - start);
            std::vector<double> in;
            in.reserve(count * 3);
            for (std::size_t i = 0; i < count; ++i) {
                const Vec3f& c = colors[start + i];
                in.push_back(c.x);
                in.push_back(c.y);
                in.push_back(c.z);
            }
            Tape tape;
            const auto input = tape.constant(static_cast<std::int64_t>(count), 3, in);
            const auto latent = model.autoencoder.encoder.forward(tape, input);
            const auto recon = model.autoencoder.decoder.forward(tape, latent);
            const auto loss = tape.mean_all(tape.square(tape.sub(recon, input)));
            for (Tensor* p : params) p->zero_grad();
            tape.backward_scalar(loss);
            adam.step(params);
            epoch_loss += tape.value(loss).values[0];
            ++batches;
        }
        if (stats) stats->loss_history.push_back(epoch_loss / static_cast<double>(batches));
    }
    model.decoder_frozen = true;
    return model;
}

std::vector<double> aggregate_feature(const Vec3d& query, const KdIndex& posed_index,
                                      std::span<const double> features, std::size_t feature_dim,
                                      std::size_t k, bool raw_distance_weights) {
    if (k == 0 || k > posed_index.size())
        throw KTooLarge("aggregate_feature: k=" + std::to_string(k) + " for " +
                        std::to_string(posed_index.size()) + " points");
    const auto neighbors = posed_index.knn(query, k);
    std::vector<double> out(feature_dim, 0.0);

    // Exact hit short-circuits to that point's feature.
    if (!neighbors.empty() && neighbors[0].distance < 1e-12) {
        const double* f = features.data() + neighbors[0].index * feature_dim;
        std::copy(f, f + feature_dim, out.begin());
        return out;
    }
    double weight_sum = 0;
    for (const auto& nb : neighbors) {
        const double w = raw_distance_weights ? nb.distance : 1.0 / (nb.distance + 1e-8);
        weight_sum += w;
        const double* f = features.data() + nb.index * feature_dim;
        for (std::size_t d = 0; d < feature_dim; ++d) out[d] += w * f[d];
    }
    if (weight_sum > 0)
        for (auto& v : out) v /= weight_sum;
    return out;
}

FeatureTrainStats train_features(const AppearanceModel& model, SemanticPointSet& points,
                                 std::span<const OrientedPointCloud> posed_semantic,
                                 std::span<const TriangleMesh> scans,
                                 const FeatureTrainConfig& config) {
    if (!model.decoder_frozen) throw Error("train_features: decoder must be frozen");
    if (posed_semantic.size() != scans.size())
        throw DimensionMismatch("train_features: posed cloud count != scan count");
    for (const auto& scan : scans)
        if (!scan.has_vertex_colors()) throw MissingColors("train_features: scan lacks colors");

    const std::size_t n = points.size();
    const std::size_t dim = static_cast<std::size_t>(model.feature_dim);
    points.feature_dim = dim;

    // KD-trees over the frozen posed geometry, built once per pose.
    std::vector<KdIndex> indices;
    indices.reserve(posed_semantic.size());
    for (const auto& cloud : posed_semantic)
        indices.emplace_back(std::span<const Vec3f>(cloud.positions));

    // Feature init: encode the color of the nearest template-scan point
    // (pose 0 is the template pose by convention).
    Tensor features({static_cast<std::int64_t>(n), static_cast<std::int64_t>(dim)});
    {
        const OrientedPointCloud scan0 = sample_surface(scans[0], std::max<std::size_t>(n, 2048),
                                                        config.seed ^ 0x5eedu);
        const KdIndex scan_index{std::span<const Vec3f>(scan0.positions)};
        std::vector<double> colors;
        colors.reserve(n * 3);
        for (std::size_t i = 0; i < n; ++i) {
            const Neighbor nb = scan_index.nearest(Vec3d(posed_semantic[0].positions[i]));
            const Vec3f c = scan0.colors.empty() ? Vec3f{0.5f, 0.5f, 0.5f} : scan0.colors[nb.index];
            colors.push_back(c.x);
            colors.push_back(c.y);
            colors.push_back(c.z);
        }
        const Tensor color_tensor = [&] {
            Tensor t({static_cast<std::int64_t>(n), 3});
            t.values = colors;
            return t;
        }();
        const Tensor encoded = model.autoencoder.encoder.forward_plain(color_tensor);
        features.values = encoded.values;
    }

    AdamState adam(config.learning_rate);
    Tensor* params[1] = {&features};
    Rng rng(config.seed);
    FeatureTrainStats stats;

    auto run_pose = [&](std::size_t pose, bool update) {
        const OrientedPointCloud samples =
            sample_surface(scans[pose], config.samples_per_pose, rng.next_u64());
        if (!samples.has_colors()) throw MissingColors("train_features: sampled scan lacks colors");
        const std::size_t m = samples.size();

        // Gather neighbor ids and frozen IDW weights per sample.
        std::vector<std::uint32_t> flat_ids(m * config.k);
        std::vector<double> flat_w(m * config.k, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const auto neighbors = indices[pose].knn(Vec3d(samples.positions[i]), config.k);
            double wsum = 0;
            const bool exact = neighbors[0].distance < 1e-12;
            for (std::size_t j = 0; j < config.k; ++j) {
                flat_ids[i * config.k + j] = neighbors[j].index;
                double w;
                if (exact) w = j == 0 ? 1.0 : 0.0;
                else if (config.raw_distance_weights) w = neighbors[j].distance;
                else w = 1.0 / (neighbors[j].distance + 1e-8);
                flat_w[i * config.k + j] = w;
                wsum += w;
            }
            if (wsum > 0)
                for (std::size_t j = 0; j < config.k; ++j) flat_w[i * config.k + j] /= wsum;
        }

        // Graph: aggregated features -> frozen decoder -> color MSE.
        Tape tape;
        const auto feat = tape.leaf(features);
        Tape::NodeId aggregated = -1;
        for (std::size_t j = 0; j < config.k; ++j) {
            std::vector<std::uint32_t> ids(m);
            std::vector<double> w(m);
            for (std::size_t i = 0; i < m; ++i) {
                ids[i] = flat_ids[i * config.k + j];
                w[i] = flat_w[i * config.k + j];
            }
            const auto rows = tape.gather_rows(feat, std::move(ids));
            const auto w_node = tape.constant(static_cast<std::int64_t>(m), 1, w);
            // Broadcast the scalar weight over the feature columns.
            std::vector<Tape::NodeId> wide(dim, w_node);
            const auto w_cols = tape.concat_cols(wide);
            const auto term = tape.mul(rows, w_cols);
            aggregated = j == 0 ? term : tape.add(aggregated, term);
        }
        const auto decoded = model.autoencoder.decoder.forward(tape, aggregated);
        std::vector<double> target;
        target.reserve(m * 3);
        for (std::size_t i = 0; i < m; ++i) {
            target.push_back(samples.colors[i].x);
            target.push_back(samples.colors[i].y);
            target.push_back(samples.colors[i].z);
        }
        const auto target_node = tape.constant(static_cast<std::int64_t>(m), 3, target);
        const auto loss = tape.mean_all(tape.square(tape.sub(decoded, target_node)));
        const double value = tape.value(loss).values[0];
        if (update) {
            features.zero_grad();
            tape.backward_scalar(loss);
            adam.step(params);
        }
        return value;
    };

    // Baseline on the same pose mix the epochs will see.
    {
        Rng saved_state = rng;
        double acc = 0;
        for (std::size_t pose = 0; pose < scans.size(); ++pose) acc += run_pose(pose, false);
        stats.initial_loss = acc / static_cast<double>(scans.size());
        rng = saved_state;
    }
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double acc = 0;
        for (std::size_t pose = 0; pose < scans.size(); ++pose) acc += run_pose(pose, true);
        stats.loss_history.push_back(acc / static_cast<double>(scans.size()));
    }

    points.features = features.values;
    return stats;
}

TriangleMesh color_mesh(const TriangleMesh& mesh, const OrientedPointCloud& posed_semantic,
                        const SemanticPointSet& points, const AppearanceModel& model, std::size_t k) {
    if (!points.has_features()) throw Error("color_mesh: semantic points have no features");
    const KdIndex index{std::span<const Vec3f>(posed_semantic.positions)};
    const std::size_t dim = points.feature_dim;

    Tensor latents({static_cast<std::int64_t>(mesh.vertex_count()), static_cast<std::int64_t>(dim)});
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        const auto f = aggregate_feature(Vec3d(mesh.vertices[v]), index, points.features, dim, k);
        std::copy(f.begin(), f.end(), latents.values.begin() + v * dim);
    }
    const Tensor colors = model.autoencoder.decoder.forward_plain(latents);

    TriangleMesh out = mesh;
    out.vertex_colors.resize(mesh.vertex_count());
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        out.vertex_colors[v] = Vec3f{
            static_cast<float>(std::clamp(colors.values[v * 3 + 0], 0.0, 1.0)),
            static_cast<float>(std::clamp(colors.values[v * 3 + 1], 0.0, 1.0)),
            static_cast<float>(std::clamp(colors.values[v * 3 + 2], 0.0, 1.0))};
    }
    return out;
}

TriangleMesh color_mesh_multi(const TriangleMesh& mesh, const OrientedPointCloud& posed_semantic,
                              const SemanticPointSet& points,
                              std::span<const AppearanceModel* const> models, std::size_t k) {
    if (!points.has_features()) throw Error("color_mesh: semantic points have no features");
    const KdIndex index{std::span<const Vec3f>(posed_semantic.positions)};
    const std::size_t dim = points.feature_dim;
    const auto& fsrc = points.feature_source;

    TriangleMesh out = mesh;
    out.vertex_colors.resize(mesh.vertex_count());
    for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
        const auto neighbors = index.knn(Vec3d(mesh.vertices[v]), std::min(k, index.size()));
        const bool exact = neighbors[0].distance < 1e-12;

        // Aggregate per decoder group, then blend decoded colors by mass.
        std::vector<double> group_mass(models.size(), 0.0);
        std::vector<std::vector<double>> group_feat(models.size(), std::vector<double>(dim, 0.0));
        for (std::size_t j = 0; j < neighbors.size(); ++j) {
            const double w = exact ? (j == 0 ? 1.0 : 0.0) : 1.0 / (neighbors[j].distance + 1e-8);
            const std::uint8_t g = fsrc.empty() ? 0 : fsrc[neighbors[j].index];
            group_mass[g] += w;
            const double* f = points.features.data() + neighbors[j].index * dim;
            for (std::size_t d = 0; d < dim; ++d) group_feat[g][d] += w * f[d];
        }
        Vec3d color{0, 0, 0};
        double total = 0;
        for (std::size_t g = 0; g < models.size(); ++g) {
            if (group_mass[g] <= 0) continue;
            Tensor latent({1, static_cast<std::int64_t>(dim)});
            for (std::size_t d = 0; d < dim; ++d) latent.values[d] = group_feat[g][d] / group_mass[g];
            const Tensor decoded = models[g]->autoencoder.decode(latent);
            color += group_mass[g] * Vec3d{decoded.values[0], decoded.values[1], decoded.values[2]};
            total += group_mass[g];
        }
        if (total > 0) color = color / total;
        out.vertex_colors[v] = Vec3f{static_cast<float>(std::clamp(color.x, 0.0, 1.0)),
                                     static_cast<float>(std::clamp(color.y, 0.0, 1.0)),
                                     static_cast<float>(std::clamp(color.z, 0.0, 1.0))};
    }
    return out;
}

std::vector<Vec3f> decode_point_colors(const SemanticPointSet& points,
                                       std::span<const AppearanceModel* const> models) {
    if (!points.has_features()) throw Error("decode_point_colors: no features");
    const std::size_t dim = points.feature_dim;
    std::vector<Vec3f> colors(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::uint8_t g = points.feature_source.empty() ? 0 : points.feature_source[i];
        Tensor latent({1, static_cast<std::int64_t>(dim)});
        for (std::size_t d = 0; d < dim; ++d) latent.values[d] = points.features[i * dim + d];
        const Tensor decoded = models[std::min<std::size_t>(g, models.size() - 1)]->autoencoder.decode(latent);
        colors[i] = Vec3f{static_cast<float>(std::clamp(decoded.values[0], 0.0, 1.0)),
                          static_cast<float>(std::clamp(decoded.values[1], 0.0, 1.0)),
                          static_cast<float>(std::clamp(decoded.values[2], 0.0, 1.0))};
    }
    return colors;
}

void AppearanceModel::save(Checkpoint& ck, const std::string& prefix) const {
    ck.add_text(prefix + "meta",
                nlohmann::json{{"feature_dim", feature_dim}, {"decoder_frozen", decoder_frozen}}.dump());
    save_mlp(ck, prefix + "encoder.", autoencoder.encoder);
    save_mlp(ck, prefix + "decoder.", autoencoder.decoder);
}

AppearanceModel AppearanceModel::load(const Checkpoint& ck, const std::string& prefix) {
    AppearanceModel model;
    const auto meta = nlohmann::json::parse(ck.get_text(prefix + "meta"));
    model.feature_dim = meta.at("feature_dim").get<int>();
    model.decoder_frozen = meta.at("decoder_frozen").get<bool>();
    model.autoencoder.encoder = load_mlp(ck, prefix + "encoder.");
    model.autoencoder.decoder = load_mlp(ck, prefix + "decoder.");
    return model;
}

}  // namespace spav
