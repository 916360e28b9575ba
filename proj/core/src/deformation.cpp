#include "spav/deformation.hpp"

#include <cmath>

#include <json.hpp>

namespace spav {

namespace {

std::vector<double> flatten3(const std::vector<Vec3d>& v) {
    std::vector<double> out;
    out.reserve(v.size() * 3);
    for (const auto& p : v) {
        out.push_back(p.x);
        out.push_back(p.y);
        out.push_back(p.z);
    }
    return out;
}

// Pose conditioning vector: non-root Euler angles followed by expression.
// The root is excluded so global motion cannot leak into the offset field.
std::vector<double> pose_vector(const DeformationModel& model, const PoseParams& pose) {
    if (pose.body_pose.size() != model.bone_count())
        throw DimensionMismatch("deform: pose length != skeleton bones");
    std::vector<double> v;
    v.reserve((model.bone_count() - 1) * 3 + model.expression_dim);
    for (std::size_t b = 1; b < model.bone_count(); ++b) {
        v.push_back(pose.body_pose[b].x);
        v.push_back(pose.body_pose[b].y);
        v.push_back(pose.body_pose[b].z);
    }
    for (std::size_t i = 0; i < model.expression_dim; ++i)
        v.push_back(i < pose.expression.size() ? pose.expression[i] : 0.0);
    return v;
}

// Kinematic groups: the root alone plus each subtree hanging off it.
std::vector<std::vector<std::int64_t>> kinematic_groups(const Skeleton& skel) {
    std::vector<int> group_of(skel.bone_count(), -1);
    std::vector<std::vector<std::int64_t>> groups;
    for (std::size_t b = 0; b < skel.bone_count(); ++b) {
        int g;
        const bool starts_group = !skel.parent[b].has_value() || *skel.parent[b] == 0;
        if (starts_group) {
            g = static_cast<int>(groups.size());
            groups.emplace_back();
        } else {
            g = group_of[*skel.parent[b]];
        }
        group_of[b] = g;
        groups[g].push_back(static_cast<std::int64_t>(b));
    }
    return groups;
}

// p(bone) = softmax_groups(scale * mean group logit) * softmax_in_group(scale * logit).
Tape::NodeId grouped_softmax(Tape& tape, Tape::NodeId logits, double scale,
                             const std::vector<std::vector<std::int64_t>>& groups,
                             std::int64_t bone_count) {
    std::vector<Tape::NodeId> group_means;
    std::vector<Tape::NodeId> within(static_cast<std::size_t>(bone_count), Tape::NodeId{-1});
    for (const auto& members : groups) {
        std::vector<Tape::NodeId> cols;
        for (std::int64_t b : members) cols.push_back(tape.slice_cols(logits, b, 1));
        Tape::NodeId sum = cols[0];
        for (std::size_t i = 1; i < cols.size(); ++i) sum = tape.add(sum, cols[i]);
        group_means.push_back(tape.scale(sum, 1.0 / static_cast<double>(members.size())));
        // Softmax within the group.
        const auto member_block = tape.concat_cols(cols);
        const auto member_probs = tape.softmax_rows(member_block, scale);
        for (std::size_t i = 0; i < members.size(); ++i)
            within[members[i]] = tape.slice_cols(member_probs, static_cast<std::int64_t>(i), 1);
    }
    const auto group_probs = tape.softmax_rows(tape.concat_cols(group_means), scale);
    std::vector<Tape::NodeId> bone_cols(static_cast<std::size_t>(bone_count));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto gp = tape.slice_cols(group_probs, static_cast<std::int64_t>(g), 1);
        for (std::int64_t b : groups[g]) bone_cols[b] = tape.mul(gp, within[b]);
    }
    return tape.concat_cols(bone_cols);
}

// Per-row rotation by Euler angles (same convention as euler_to_rotation),
// composed from elementwise primitives so gradients come for free.
Tape::NodeId rotate_rows_by_euler(Tape& tape, Tape::NodeId vectors, Tape::NodeId angles) {
    const auto ax = tape.slice_cols(angles, 0, 1);
    const auto ay = tape.slice_cols(angles, 1, 1);
    const auto az = tape.slice_cols(angles, 2, 1);
    const auto ca = tape.cos_elem(ax), sa = tape.sin_elem(ax);
    const auto cb = tape.cos_elem(ay), sb = tape.sin_elem(ay);
    const auto cg = tape.cos_elem(az), sg = tape.sin_elem(az);

    auto x = tape.slice_cols(vectors, 0, 1);
    auto y = tape.slice_cols(vectors, 1, 1);
    auto z = tape.slice_cols(vectors, 2, 1);

    // Rx
    const auto y1 = tape.sub(tape.mul(ca, y), tape.mul(sa, z));
    const auto z1 = tape.add(tape.mul(sa, y), tape.mul(ca, z));
    // Ry
    const auto x2 = tape.add(tape.mul(cb, x), tape.mul(sb, z1));
    const auto z2 = tape.sub(tape.mul(cb, z1), tape.mul(sb, x));
    // Rz
    const auto x3 = tape.sub(tape.mul(cg, x2), tape.mul(sg, y1));
    const auto y3 = tape.add(tape.mul(sg, x2), tape.mul(cg, y1));

    const Tape::NodeId parts[3] = {x3, y3, z2};
    return tape.concat_cols(parts);
}

}  // namespace

DeformationModel DeformationModel::init(const Skeleton& skeleton, const PoseParams& template_pose,
                                        std::size_t expression_dim, const NetSizes& sizes, Rng& rng) {
    skeleton.validate();
    DeformationModel m;
    m.skeleton = skeleton;
    m.template_pose = template_pose;
    m.expression_dim = expression_dim;
    m.config.pe_levels = sizes.pe_levels;
    m.config.pose_code_dim = sizes.pose_code_dim;

    const std::int64_t pe_dim = positional_encoding_dim(3, sizes.pe_levels);

    MlpSpec delta_spec;
    delta_spec.in_dim = pe_dim + sizes.pose_code_dim;
    delta_spec.out_dim = 6;
    delta_spec.depth = sizes.deltanet_depth;
    delta_spec.width = sizes.deltanet_width;
    if (sizes.deltanet_skip > 0 && sizes.deltanet_skip < sizes.deltanet_depth)
        delta_spec.skip_layers = {sizes.deltanet_skip};
    // Last layer scaled down so initial offsets start near zero.
    m.deltanet = Mlp::init(delta_spec, rng, 1e-4);

    MlpSpec lbs_spec;
    lbs_spec.in_dim = pe_dim;
    lbs_spec.out_dim = static_cast<std::int64_t>(skeleton.bone_count());
    lbs_spec.depth = sizes.lbsnet_depth;
    lbs_spec.width = sizes.lbsnet_width;
    // Small final layer keeps the scale-20 softmax unsaturated at the start.
    m.lbsnet = Mlp::init(lbs_spec, rng, 1e-2);

    MlpSpec enc_spec;
    enc_spec.in_dim = m.pose_input_dim();
    enc_spec.out_dim = sizes.pose_code_dim;
    enc_spec.depth = 2;
    enc_spec.width = sizes.encoder_width;
    m.pose_encoder = Mlp::init(enc_spec, rng);
    return m;
}

std::vector<Tensor*> DeformationModel::parameters() {
    auto out = deltanet_parameters();
    for (Tensor* t : lbsnet_parameters()) out.push_back(t);
    return out;
}

std::vector<Tensor*> DeformationModel::deltanet_parameters() {
    auto out = deltanet.parameters();
    for (Tensor* t : pose_encoder.parameters()) out.push_back(t);
    return out;
}

std::vector<Tensor*> DeformationModel::lbsnet_parameters() { return lbsnet.parameters(); }

void DeformationModel::zero_grad() {
    for (Tensor* t : parameters()) t->zero_grad();
}

DeformGraph deform_graph(const DeformationModel& model, const std::vector<Vec3d>& positions,
                         const std::vector<Vec3d>& normals, const PoseParams& pose,
                         const DeformOptions& options) {
    if (positions.size() != normals.size())
        throw DimensionMismatch("deform: positions/normals length mismatch");
    DeformGraph g;
    g.count = static_cast<std::int64_t>(positions.size());
    Tape& tape = g.tape;

    const auto flat_pos = flatten3(positions);
    const auto flat_nrm = flatten3(normals);
    g.points = options.differentiable_inputs ? tape.input(g.count, 3, flat_pos)
                                             : tape.constant(g.count, 3, flat_pos);
    const Tape::NodeId normals_node = options.differentiable_inputs
                                          ? tape.input(g.count, 3, flat_nrm)
                                          : tape.constant(g.count, 3, flat_nrm);

    // DeltaNet: concat(PE(x), pose code) -> (delta, theta)
    const auto pe = positional_encoding(tape, g.points, model.config.pe_levels);
    const auto pose_vec = pose_vector(model, pose);
    const auto pose_in = tape.constant(1, static_cast<std::int64_t>(pose_vec.size()), pose_vec);
    const auto pose_code = model.pose_encoder.forward(tape, pose_in);
    const auto pose_rows = tape.broadcast_rows(pose_code, g.count);
    const Tape::NodeId delta_in_parts[2] = {pe, pose_rows};
    const auto delta_out = model.deltanet.forward(tape, tape.concat_cols(delta_in_parts));
    g.delta = tape.slice_cols(delta_out, 0, 3);
    g.theta = tape.slice_cols(delta_out, 3, 3);
    if (options.force_zero_delta) {
        g.delta = tape.scale(g.delta, 0.0);
        g.theta = tape.scale(g.theta, 0.0);
    }

    // Canonical frame: x_c = x + delta, n_c = R(theta) n
    g.canonical_positions = tape.add(g.points, g.delta);
    g.canonical_normals = rotate_rows_by_euler(tape, normals_node, g.theta);

    // Weight field evaluated at the template position (default) or x_c.
    if (options.inject_weights) {
        const SkinningWeights& w = *options.inject_weights;
        if (w.point_count() != positions.size() || w.bone_count != model.bone_count())
            throw DimensionMismatch("deform: injected weights shape mismatch");
        g.weights = tape.constant(g.count, static_cast<std::int64_t>(w.bone_count), w.values);
    } else {
        const auto w_input = model.config.lbs_input_canonical ? g.canonical_positions : g.points;
        const auto w_pe = positional_encoding(tape, w_input, model.config.pe_levels);
        const auto logits = model.lbsnet.forward(tape, w_pe);
        g.weights = model.config.hierarchical_softmax
                        ? grouped_softmax(tape, logits, model.config.softmax_scale,
                                          kinematic_groups(model.skeleton),
                                          static_cast<std::int64_t>(model.bone_count()))
                        : tape.softmax_rows(logits, model.config.softmax_scale);
        if (options.detach_weights) {
            const Tensor& w = tape.value(g.weights);
            g.weights = tape.constant(w.rows(), w.cols(), w.values);
        }
    }

    // Canonical -> pose via the blended bone motions.
    const auto motions =
        forward_kinematics(model.skeleton, pose, model.template_pose).skinning_motions();
    g.posed_positions = tape.lbs_blend(g.canonical_positions, g.weights, motions, /*positions=*/true);
    g.posed_normals =
        tape.normalize_rows(tape.lbs_blend(g.canonical_normals, g.weights, motions, /*positions=*/false));
    return g;
}

Tape::NodeId lbs_weights_graph(const DeformationModel& model, Tape& tape,
                               const std::vector<Vec3d>& positions) {
    const auto flat = flatten3(positions);
    const auto x = tape.constant(static_cast<std::int64_t>(positions.size()), 3, flat);
    const auto pe = positional_encoding(tape, x, model.config.pe_levels);
    const auto logits = model.lbsnet.forward(tape, pe);
    if (model.config.hierarchical_softmax)
        return grouped_softmax(tape, logits, model.config.softmax_scale,
                               kinematic_groups(model.skeleton),
                               static_cast<std::int64_t>(model.bone_count()));
    return tape.softmax_rows(logits, model.config.softmax_scale);
}

std::vector<Vec3d> DeformGraph::values3(Tape::NodeId id) const {
    const Tensor& t = tape.value(id);
    if (t.cols() != 3) throw ShapeMismatch("values3: node is not [n,3]");
    std::vector<Vec3d> out(static_cast<std::size_t>(t.rows()));
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = {t.values[i * 3], t.values[i * 3 + 1], t.values[i * 3 + 2]};
    return out;
}

std::vector<double> DeformGraph::matrix(Tape::NodeId id) const { return tape.value(id).values; }

std::pair<std::vector<Vec3d>, std::vector<Vec3d>> delta_forward(const DeformationModel& model,
                                                                const OrientedPointCloud& points,
                                                                const PoseParams& pose) {
    std::vector<Vec3d> pos(points.size()), nrm(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        pos[i] = Vec3d(points.positions[i]);
        nrm[i] = Vec3d(points.normals[i]);
    }
    const DeformGraph g = deform_graph(model, pos, nrm, pose);
    return {g.values3(g.delta), g.values3(g.theta)};
}

OrientedPointCloud apply_delta(const OrientedPointCloud& points, const std::vector<Vec3d>& delta,
                               const std::vector<Vec3d>& theta) {
    if (delta.size() != points.size() || theta.size() != points.size())
        throw DimensionMismatch("apply_delta: count mismatch");
    OrientedPointCloud out;
    out.positions.resize(points.size());
    out.normals.resize(points.size());
    out.colors = points.colors;
    for (std::size_t i = 0; i < points.size(); ++i) {
        out.positions[i] = Vec3f(Vec3d(points.positions[i]) + delta[i]);
        out.normals[i] = Vec3f(euler_to_rotation(theta[i]) * Vec3d(points.normals[i]));
    }
    return out;
}

SkinningWeights lbs_weights(const DeformationModel& model, const std::vector<Vec3f>& positions) {
    Tape tape;
    std::vector<Vec3d> pos(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) pos[i] = Vec3d(positions[i]);
    const auto node = lbs_weights_graph(model, tape, pos);
    SkinningWeights w;
    w.bone_count = model.bone_count();
    w.values = tape.value(node).values;
    return w;
}

DeformedBatch deform(const DeformationModel& model, const OrientedPointCloud& points,
                     const PoseParams& pose, const DeformOptions& options) {
    std::vector<Vec3d> pos(points.size()), nrm(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        pos[i] = Vec3d(points.positions[i]);
        nrm[i] = Vec3d(points.normals[i]);
    }
    const DeformGraph g = deform_graph(model, pos, nrm, pose, options);
    DeformedBatch batch;
    batch.delta = g.values3(g.delta);
    batch.theta = g.values3(g.theta);
    batch.canonical_positions = g.values3(g.canonical_positions);
    batch.canonical_normals = g.values3(g.canonical_normals);
    batch.posed_positions = g.values3(g.posed_positions);
    batch.posed_normals = g.values3(g.posed_normals);
    batch.weights.bone_count = model.bone_count();
    batch.weights.values = g.matrix(g.weights);
    return batch;
}

// --- checkpoint IO ---

void DeformationModel::save(Checkpoint& ck, const std::string& prefix) const {
    ck.add_text(prefix + "skeleton", skeleton_to_json(skeleton));
    ck.add_text(prefix + "template_pose", pose_to_json(template_pose));
    nlohmann::json meta{{"expression_dim", expression_dim},
                        {"softmax_scale", config.softmax_scale},
                        {"lbs_input_canonical", config.lbs_input_canonical},
                        {"hierarchical_softmax", config.hierarchical_softmax},
                        {"pe_levels", config.pe_levels},
                        {"pose_code_dim", config.pose_code_dim}};
    ck.add_text(prefix + "meta", meta.dump());
    save_mlp(ck, prefix + "deltanet.", deltanet);
    save_mlp(ck, prefix + "lbsnet.", lbsnet);
    save_mlp(ck, prefix + "encoder.", pose_encoder);
}

DeformationModel DeformationModel::load(const Checkpoint& ck, const std::string& prefix) {
    DeformationModel m;
    m.skeleton = skeleton_from_json(ck.get_text(prefix + "skeleton"));
    m.template_pose = pose_from_json(ck.get_text(prefix + "template_pose"));
    const auto meta = nlohmann::json::parse(ck.get_text(prefix + "meta"));
    m.expression_dim = meta.at("expression_dim").get<std::size_t>();
    m.config.softmax_scale = meta.at("softmax_scale").get<double>();
    m.config.lbs_input_canonical = meta.at("lbs_input_canonical").get<bool>();
    if (meta.contains("hierarchical_softmax"))
        m.config.hierarchical_softmax = meta.at("hierarchical_softmax").get<bool>();
    m.config.pe_levels = meta.at("pe_levels").get<int>();
    m.config.pose_code_dim = meta.at("pose_code_dim").get<int>();
    m.deltanet = load_mlp(ck, prefix + "deltanet.");
    m.lbsnet = load_mlp(ck, prefix + "lbsnet.");
    m.pose_encoder = load_mlp(ck, prefix + "encoder.");
    return m;
}

}  // namespace spav
