#include "spav/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "spav/kdtree.hpp"
#include "spav/losses.hpp"
#include "spav/mesh_io.hpp"
#include "spav/nn.hpp"
#include "spav/rng.hpp"

namespace spav {

void LabeledTemplateMesh::validate() const {
    mesh.validate();
    if (!mesh.has_face_labels()) throw UnlabeledVertex("labeled template: faces not labeled");
    if (vertex_labels.size() != mesh.vertex_count())
        throw UnlabeledVertex("labeled template: vertex label count mismatch");
    if (vertex_weights.point_count() != 0 && vertex_weights.point_count() != mesh.vertex_count())
        throw DimensionMismatch("labeled template: weight rows != vertex count");
}

LabeledTemplateMesh label_faces(const TriangleMesh& mesh,
                                const std::vector<std::uint8_t>& per_vertex_labels) {
    if (per_vertex_labels.size() != mesh.vertex_count())
        throw UnlabeledVertex("label_faces: need one label per vertex, got " +
                              std::to_string(per_vertex_labels.size()) + " for " +
                              std::to_string(mesh.vertex_count()) + " vertices");
    for (auto l : per_vertex_labels)
        if (l >= kPartCount) throw UnlabeledVertex("label_faces: label out of range");

    LabeledTemplateMesh out;
    out.mesh = mesh;
    out.vertex_labels = per_vertex_labels;
    out.mesh.face_labels.resize(mesh.face_count());
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        const std::uint8_t a = per_vertex_labels[t[0]];
        const std::uint8_t b = per_vertex_labels[t[1]];
        const std::uint8_t c = per_vertex_labels[t[2]];
        std::uint8_t label;
        if (a == b || a == c) label = a;
        else if (b == c) label = b;
        else label = std::min({a, b, c});
        out.mesh.face_labels[f] = label;
    }
    return out;
}

std::vector<std::uint8_t> read_vertex_labels(const std::filesystem::path& path,
                                             std::size_t expected_count) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> labels;
    int value;
    while (in >> value) {
        if (value < 0 || value >= static_cast<int>(kPartCount))
            throw ParseError("vertex label out of range at line " + std::to_string(labels.size() + 1));
        labels.push_back(static_cast<std::uint8_t>(value));
    }
    if (labels.size() != expected_count)
        throw ParseError("vertex label file has " + std::to_string(labels.size()) + " rows, expected " +
                         std::to_string(expected_count));
    return labels;
}

void SemanticPointSet::validate() const {
    const std::size_t n = size();
    if (barycentric.size() != n || normal_offset.size() != n || labels.size() != n ||
        source.size() != n)
        throw DimensionMismatch("semantic set: field lengths disagree");
    if (!feature_source.empty() && feature_source.size() != n)
        throw DimensionMismatch("semantic set: feature_source length mismatch");
    if (!features.empty() && features.size() != n * feature_dim)
        throw DimensionMismatch("semantic set: feature matrix shape mismatch");
    for (const auto& b : barycentric) {
        if (b.x < -1e-9 || b.y < -1e-9 || b.z < -1e-9)
            throw Error("semantic set: negative barycentric coordinate");
        if (std::fabs(b.x + b.y + b.z - 1.0) > 1e-6)
            throw Error("semantic set: barycentric row does not sum to 1");
    }
}

void SemanticPointSet::refresh_cache(std::span<const TriangleMesh* const> templates) {
    positions.resize(size());
    normals.resize(size());
    for (std::size_t i = 0; i < size(); ++i) {
        if (source[i] >= templates.size())
            throw DimensionMismatch("semantic cache: point " + std::to_string(i) + " routes to template " +
                                    std::to_string(source[i]) + " but only " +
                                    std::to_string(templates.size()) + " provided");
        const TriangleMesh& tm = *templates[source[i]];
        const auto& tri = tm.faces[face_index[i]];
        const Vec3d v0(tm.vertices[tri[0]]), v1(tm.vertices[tri[1]]), v2(tm.vertices[tri[2]]);
        const Vec3d n = tm.face_normal(face_index[i]);
        const Vec3d& b = barycentric[i];
        positions[i] = Vec3f(v0 * b.x + v1 * b.y + v2 * b.z + n * normal_offset[i]);
        normals[i] = Vec3f(n);
    }
}

void SemanticPointSet::refresh_cache(const TriangleMesh& single_template) {
    const TriangleMesh* t = &single_template;
    refresh_cache(std::span<const TriangleMesh* const>(&t, 1));
}

SemanticPointSet sample_semantic(const LabeledTemplateMesh& template_mesh, std::size_t n,
                                 std::uint64_t seed) {
    template_mesh.validate();
    if (n == 0) throw Error("sample_semantic: n must be >= 1");
    const TriangleMesh& mesh = template_mesh.mesh;
    if (mesh.face_count() == 0) throw EmptyMesh("sample_semantic: empty template");

    std::vector<double> cumulative(mesh.face_count());
    double total = 0;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        total += mesh.face_area(f);
        cumulative[f] = total;
    }

    Rng rng(seed);
    SemanticPointSet set;
    set.face_index.resize(n);
    set.barycentric.resize(n);
    set.normal_offset.assign(n, 0.0);
    set.labels.resize(n);
    set.source.assign(n, 0);
    set.feature_source.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = rng.uniform() * total;
        const std::size_t f = std::min<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin(),
            mesh.face_count() - 1);
        const double su = std::sqrt(rng.uniform());
        const double v = rng.uniform();
        set.face_index[i] = static_cast<std::uint32_t>(f);
        set.barycentric[i] = {1.0 - su, su * (1.0 - v), su * v};
        set.labels[i] = mesh.face_labels[f];
    }
    set.refresh_cache(mesh);
    return set;
}

namespace {

// Euclidean projection onto the probability simplex.
Vec3d project_simplex(const Vec3d& b) {
    double u[3] = {b.x, b.y, b.z};
    std::sort(u, u + 3, std::greater<double>());
    double tau = 0, cum = 0;
    for (int i = 0; i < 3; ++i) {
        cum += u[i];
        const double t = (cum - 1.0) / (i + 1);
        if (u[i] - t > 0) tau = t;
    }
    return {std::max(0.0, b.x - tau), std::max(0.0, b.y - tau), std::max(0.0, b.z - tau)};
}

}  // namespace

AlignStats align_to_template_scan(SemanticPointSet& points, const LabeledTemplateMesh& template_mesh,
                                  const OrientedPointCloud& template_scan, const AlignConfig& config) {
    points.validate();
    if (template_scan.size() == 0) throw EmptyCloud("align: empty template scan");
    const TriangleMesh& mesh = template_mesh.mesh;
    const std::size_t n = points.size();

    // Per-face geometry is constant during alignment.
    std::vector<Vec3d> scan_points(template_scan.size());
    for (std::size_t i = 0; i < template_scan.size(); ++i)
        scan_points[i] = Vec3d(template_scan.positions[i]);
    const KdIndex scan_index(scan_points);

    // Flattened local coordinates (b0, b1, b2, noff) per point.
    Tensor coords({static_cast<std::int64_t>(n), 4});
    for (std::size_t i = 0; i < n; ++i) {
        coords.values[i * 4 + 0] = points.barycentric[i].x;
        coords.values[i * 4 + 1] = points.barycentric[i].y;
        coords.values[i * 4 + 2] = points.barycentric[i].z;
        coords.values[i * 4 + 3] = points.normal_offset[i];
    }
    AdamState adam(config.learning_rate);
    Tensor* params[1] = {&coords};

    Rng rng(config.seed);
    AlignStats stats;
    std::vector<Vec3d> world(n);

    auto eval_world = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            const auto& tri = mesh.faces[points.face_index[i]];
            const Vec3d v0(mesh.vertices[tri[0]]), v1(mesh.vertices[tri[1]]), v2(mesh.vertices[tri[2]]);
            const Vec3d fn = mesh.face_normal(points.face_index[i]);
            const double* c = coords.values.data() + i * 4;
            world[i] = v0 * c[0] + v1 * c[1] + v2 * c[2] + fn * c[3];
        }
    };

    // EMD runs on a fixed equal-size subset (sampling order is already
    // random); the matching refreshes periodically and stays frozen in
    // between, so its pull is a stable spring rather than per-step noise.
    const std::size_t emd_n = std::min({config.emd_points, n, template_scan.size()});
    AuctionConfig auction;
    auction.max_bids = config.auction_max_bids;
    std::vector<std::uint32_t> emd_world_ids(emd_n), emd_scan_ids(emd_n);
    for (std::size_t s = 0; s < emd_n; ++s) {
        emd_world_ids[s] = static_cast<std::uint32_t>(s);
        emd_scan_ids[s] = static_cast<std::uint32_t>(rng.uniform_index(scan_points.size()));
    }
    std::vector<Vec3d> emd_targets(emd_n);
    for (std::size_t s = 0; s < emd_n; ++s) emd_targets[s] = scan_points[emd_scan_ids[s]];
    MatchResult match;

    for (int iter = 0; iter < config.iterations; ++iter) {
        eval_world();

        if (config.emd_weight > 0 && (iter % std::max(config.emd_refresh, 1) == 0)) {
            std::vector<Vec3d> sub_world(emd_n);
            for (std::size_t s = 0; s < emd_n; ++s) sub_world[s] = world[emd_world_ids[s]];
            match = emd_match(sub_world, emd_targets, auction);
        }

        // Chamfer, direction world -> scan plus scan -> world.
        coords.zero_grad();
        double chamfer_val = 0;
        {
            const KdIndex world_index(world);
            const double inv_n = 1.0 / static_cast<double>(n);
            const double inv_m = 1.0 / static_cast<double>(scan_points.size());
            std::vector<Vec3d> grad(n, Vec3d{0, 0, 0});
            for (std::size_t i = 0; i < n; ++i) {
                const Neighbor nn = scan_index.nearest(world[i]);
                const Vec3d diff = world[i] - scan_points[nn.index];
                chamfer_val += inv_n * diff.squared_norm();
                grad[i] += 2.0 * inv_n * diff;
            }
            for (std::size_t j = 0; j < scan_points.size(); ++j) {
                const Neighbor nn = world_index.nearest(scan_points[j]);
                const Vec3d diff = world[nn.index] - scan_points[j];
                chamfer_val += inv_m * diff.squared_norm();
                grad[nn.index] += 2.0 * inv_m * diff;
            }

            if (config.emd_weight > 0) {
                std::vector<Vec3d> sub_world(emd_n);
                for (std::size_t s = 0; s < emd_n; ++s) sub_world[s] = world[emd_world_ids[s]];
                const PointLoss emd = emd_loss(match, sub_world, emd_targets);
                for (std::size_t s = 0; s < emd_n; ++s)
                    grad[emd_world_ids[s]] += (config.emd_weight / config.chamfer_weight) * emd.grad[s];
            }

            // Chain to the local coordinates. Barycentric gradients use
            // centered vertices (the simplex-tangent projection); otherwise
            // the shared vertex offset dominates every component and Adam's
            // per-coordinate steps cancel in the later projection.
            coords.ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const auto& tri = mesh.faces[points.face_index[i]];
                const Vec3d v0(mesh.vertices[tri[0]]), v1(mesh.vertices[tri[1]]), v2(mesh.vertices[tri[2]]);
                const Vec3d center = (v0 + v1 + v2) / 3.0;
                const Vec3d fn = mesh.face_normal(points.face_index[i]);
                const Vec3d g = config.chamfer_weight * grad[i];
                coords.grad[i * 4 + 0] = g.dot(v0 - center);
                coords.grad[i * 4 + 1] = g.dot(v1 - center);
                coords.grad[i * 4 + 2] = g.dot(v2 - center);
                coords.grad[i * 4 + 3] = g.dot(fn);
            }
        }
        stats.chamfer_history.push_back(chamfer_val);

        adam.step(params);

        // Re-project onto the simplex and clamp the offset.
        for (std::size_t i = 0; i < n; ++i) {
            double* c = coords.values.data() + i * 4;
            const Vec3d projected = project_simplex({c[0], c[1], c[2]});
            c[0] = projected.x;
            c[1] = projected.y;
            c[2] = projected.z;
            c[3] = std::clamp(c[3], -config.max_normal_offset, config.max_normal_offset);
        }
    }

    // Write back and refresh the cache.
    for (std::size_t i = 0; i < n; ++i) {
        const double* c = coords.values.data() + i * 4;
        points.barycentric[i] = {c[0], c[1], c[2]};
        points.normal_offset[i] = c[3];
    }
    points.refresh_cache(mesh);

    eval_world();
    std::vector<Vec3d> final_world = world;
    stats.final_chamfer = chamfer_value(final_world, scan_points);
    stats.converged = stats.final_chamfer <= config.converged_chamfer;
    points.validate();
    return stats;
}

OrientedPointCloud repose_semantic(const SemanticPointSet& points,
                                   std::span<const TriangleMesh* const> templates,
                                   std::span<const DeformationModel* const> models,
                                   const PoseParams& pose, std::vector<std::uint8_t>* labels_out) {
    points.validate();
    const std::size_t n = points.size();

    // Group by source id, deform each group with its model, reassemble.
    std::vector<std::vector<std::uint32_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t s = points.source[i];
        if (s >= models.size() || s >= templates.size())
            throw DimensionMismatch("repose: source id exceeds model/template count");
        if (groups.size() <= s) groups.resize(s + 1);
        groups[s].push_back(static_cast<std::uint32_t>(i));
    }

    SemanticPointSet refreshed = points;
    refreshed.refresh_cache(templates);

    OrientedPointCloud out;
    out.positions.resize(n);
    out.normals.resize(n);
    for (std::size_t s = 0; s < groups.size(); ++s) {
        if (groups[s].empty()) continue;
        std::vector<Vec3d> pos, nrm;
        pos.reserve(groups[s].size());
        nrm.reserve(groups[s].size());
        for (const auto i : groups[s]) {
            pos.push_back(Vec3d(refreshed.positions[i]));
            nrm.push_back(Vec3d(refreshed.normals[i]));
        }
        // Pose vectors are padded/truncated per model inside deform_graph.
        const DeformGraph g = deform_graph(*models[s], pos, nrm, pose);
        const auto posed = g.values3(g.posed_positions);
        const auto posed_n = g.values3(g.posed_normals);
        for (std::size_t j = 0; j < groups[s].size(); ++j) {
            out.positions[groups[s][j]] = Vec3f(posed[j]);
            out.normals[groups[s][j]] = Vec3f(posed_n[j]);
        }
    }
    if (labels_out) *labels_out = points.labels;
    return out;
}

OrientedPointCloud repose_semantic(const SemanticPointSet& points, const TriangleMesh& template_mesh,
                                   const DeformationModel& model, const PoseParams& pose,
                                   std::vector<std::uint8_t>* labels_out) {
    const TriangleMesh* t = &template_mesh;
    const DeformationModel* m = &model;
    return repose_semantic(points, std::span<const TriangleMesh* const>(&t, 1),
                           std::span<const DeformationModel* const>(&m, 1), pose, labels_out);
}

// --- serialization ---

void write_semantic_ply(const SemanticPointSet& points, const std::filesystem::path& path) {
    points.validate();
    std::string out;
    out += "ply\nformat binary_little_endian 1.0\n";
    out += "element vertex " + std::to_string(points.size()) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    out += "property float nx\nproperty float ny\nproperty float nz\n";
    out += "property uint face_index\n";
    out += "property float b0\nproperty float b1\nproperty float b2\nproperty float noff\n";
    out += "property uchar label\nproperty uchar source\n";
    out += "end_header\n";
    auto put_f32 = [&out](float v) { out.append(reinterpret_cast<const char*>(&v), 4); };
    auto put_u32 = [&out](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3f p = i < points.positions.size() ? points.positions[i] : Vec3f{0, 0, 0};
        const Vec3f n = i < points.normals.size() ? points.normals[i] : Vec3f{0, 0, 1};
        put_f32(p.x); put_f32(p.y); put_f32(p.z);
        put_f32(n.x); put_f32(n.y); put_f32(n.z);
        put_u32(points.face_index[i]);
        put_f32(static_cast<float>(points.barycentric[i].x));
        put_f32(static_cast<float>(points.barycentric[i].y));
        put_f32(static_cast<float>(points.barycentric[i].z));
        put_f32(static_cast<float>(points.normal_offset[i]));
        out.push_back(static_cast<char>(points.labels[i]));
        out.push_back(static_cast<char>(points.source[i]));
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoError("cannot open " + path.string() + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

SemanticPointSet read_semantic_ply(const std::filesystem::path& path) {
    const PlyFile f = read_ply(path);
    SemanticPointSet set;
    const std::size_t n = f.positions.size();
    auto channel = [&](const char* name) -> const std::vector<double>& {
        auto it = f.extra_vertex.find(name);
        if (it == f.extra_vertex.end())
            throw ParseError(std::string("semantic ply: missing property ") + name);
        return it->second;
    };
    const auto& fi = channel("face_index");
    const auto& b0 = channel("b0");
    const auto& b1 = channel("b1");
    const auto& b2 = channel("b2");
    const auto& noff = channel("noff");
    set.face_index.resize(n);
    set.barycentric.resize(n);
    set.normal_offset.resize(n);
    set.labels = f.labels;
    if (set.labels.size() != n) throw ParseError("semantic ply: missing label property");
    set.source.assign(n, 0);
    if (auto it = f.extra_vertex.find("source"); it != f.extra_vertex.end())
        for (std::size_t i = 0; i < n; ++i) set.source[i] = static_cast<std::uint8_t>(it->second[i]);
    set.feature_source = set.source;
    for (std::size_t i = 0; i < n; ++i) {
        set.face_index[i] = static_cast<std::uint32_t>(fi[i]);
        // f32 storage keeps the simplex invariants within tolerance.
        set.barycentric[i] = {b0[i], b1[i], b2[i]};
        set.normal_offset[i] = noff[i];
    }
    set.positions = f.positions;
    set.normals = f.normals;
    set.validate();
    return set;
}

void save_semantic(const SemanticPointSet& points, Checkpoint& ck, const std::string& prefix) {
    points.validate();
    const std::size_t n = points.size();
    ck.add_u32(prefix + "face_index", points.face_index, {n});
    std::vector<double> bary;
    bary.reserve(n * 3);
    for (const auto& b : points.barycentric) {
        bary.push_back(b.x);
        bary.push_back(b.y);
        bary.push_back(b.z);
    }
    ck.add_f32(prefix + "barycentric", bary, {n, 3});
    ck.add_f32(prefix + "normal_offset", points.normal_offset, {n});
    ck.add_bytes(prefix + "labels", points.labels);
    ck.add_bytes(prefix + "source", points.source);
    ck.add_bytes(prefix + "feature_source",
                 points.feature_source.empty() ? std::vector<std::uint8_t>(points.size(), 0)
                                               : points.feature_source);
    if (points.has_features())
        ck.add_f32(prefix + "features", points.features, {n, points.feature_dim});
}

SemanticPointSet load_semantic(const Checkpoint& ck, const std::string& prefix) {
    SemanticPointSet set;
    std::vector<std::uint32_t> fi = ck.get_u32(prefix + "face_index");
    set.face_index = std::move(fi);
    const std::size_t n = set.face_index.size();
    const auto bary = ck.get_f32_as_f64(prefix + "barycentric");
    set.barycentric.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        set.barycentric[i] = {bary[i * 3], bary[i * 3 + 1], bary[i * 3 + 2]};
    set.normal_offset = ck.get_f32_as_f64(prefix + "normal_offset");
    set.labels = ck.get_bytes(prefix + "labels");
    set.source = ck.get_bytes(prefix + "source");
    if (ck.has(prefix + "feature_source")) set.feature_source = ck.get_bytes(prefix + "feature_source");
    else set.feature_source.assign(n, 0);
    if (ck.has(prefix + "features")) {
        set.features = ck.get_f32_as_f64(prefix + "features");
        set.feature_dim = ck.get_shape(prefix + "features")[1];
    }
    set.validate();
    return set;
}

}  // namespace spav
