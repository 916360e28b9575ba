#include "spav/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "spav/checkpoint.hpp"
#include "spav/grid.hpp"
#include "spav/marching_cubes.hpp"
#include "spav/mesh_io.hpp"
#include "spav/rng.hpp"

namespace spav {

namespace {

const char* const kPartNames[kPartCount] = {"head",      "body",       "left_arm", "right_arm",
                                            "left_hand", "right_hand", "left_leg", "right_leg"};

// Bone capsule: segment from head to tail with a radius, plus its part.
struct BoneShape {
    Vec3d head, tail;
    double radius;
    PartLabel part;
};

struct BodySpec {
    Skeleton skeleton;
    std::vector<BoneShape> shapes;  // rest pose, one per bone
};

// 17-bone humanoid: root, spine, head, and per side shoulder, upper arm,
// forearm, hand, thigh, shin, foot. Stands along +y, arms along +-x.
BodySpec make_body() {
    BodySpec body;
    auto add = [&](const char* name, int parent, const Vec3d& offset) {
        body.skeleton.names.push_back(name);
        body.skeleton.parent.push_back(parent < 0 ? std::nullopt
                                                  : std::optional<std::uint32_t>(parent));
        body.skeleton.rest_offsets.push_back(offset);
        return static_cast<int>(body.skeleton.bone_count() - 1);
    };
    const int root = add("root", -1, {0, 1.00, 0});
    const int spine = add("spine", root, {0, 0.30, 0});
    add("head", spine, {0, 0.25, 0});
    const int sh_l = add("shoulder_l", spine, {0.12, 0.18, 0});
    const int ua_l = add("upper_arm_l", sh_l, {0.14, 0, 0});
    const int fa_l = add("forearm_l", ua_l, {0.28, 0, 0});
    add("hand_l", fa_l, {0.26, 0, 0});
    const int sh_r = add("shoulder_r", spine, {-0.12, 0.18, 0});
    const int ua_r = add("upper_arm_r", sh_r, {-0.14, 0, 0});
    const int fa_r = add("forearm_r", ua_r, {-0.28, 0, 0});
    add("hand_r", fa_r, {-0.26, 0, 0});
    const int th_l = add("thigh_l", root, {0.10, -0.05, 0});
    const int sn_l = add("shin_l", th_l, {0, -0.42, 0});
    add("foot_l", sn_l, {0, -0.45, 0});
    const int th_r = add("thigh_r", root, {-0.10, -0.05, 0});
    const int sn_r = add("shin_r", th_r, {0, -0.42, 0});
    add("foot_r", sn_r, {0, -0.45, 0});
    body.skeleton.validate();

    // Rest joint positions from the offsets.
    std::vector<Vec3d> joints(body.skeleton.bone_count());
    for (std::size_t i = 0; i < joints.size(); ++i) {
        joints[i] = body.skeleton.rest_offsets[i];
        if (body.skeleton.parent[i]) joints[i] += joints[*body.skeleton.parent[i]];
    }
    body.shapes.resize(body.skeleton.bone_count());
    auto seg = [&](const char* bone, const Vec3d& tail_offset, double radius, PartLabel part) {
        const int b = body.skeleton.find_bone(bone);
        body.shapes[b] = {joints[b], joints[b] + tail_offset, radius, part};
    };
    seg("root", {0, 0.30, 0}, 0.155, PartLabel::Body);
    seg("spine", {0, 0.25, 0}, 0.145, PartLabel::Body);
    seg("head", {0, 0.18, 0}, 0.105, PartLabel::Head);
    seg("shoulder_l", {0.14, 0, 0}, 0.065, PartLabel::Body);
    seg("upper_arm_l", {0.28, 0, 0}, 0.052, PartLabel::LeftArm);
    seg("forearm_l", {0.26, 0, 0}, 0.046, PartLabel::LeftArm);
    seg("hand_l", {0.13, 0, 0}, 0.042, PartLabel::LeftHand);
    seg("shoulder_r", {-0.14, 0, 0}, 0.065, PartLabel::Body);
    seg("upper_arm_r", {-0.28, 0, 0}, 0.052, PartLabel::RightArm);
    seg("forearm_r", {-0.26, 0, 0}, 0.046, PartLabel::RightArm);
    seg("hand_r", {-0.13, 0, 0}, 0.042, PartLabel::RightHand);
    seg("thigh_l", {0, -0.42, 0}, 0.082, PartLabel::LeftLeg);
    seg("shin_l", {0, -0.45, 0}, 0.058, PartLabel::LeftLeg);
    seg("foot_l", {0, -0.04, 0.14}, 0.048, PartLabel::LeftLeg);
    seg("thigh_r", {0, -0.42, 0}, 0.082, PartLabel::RightLeg);
    seg("shin_r", {0, -0.45, 0}, 0.058, PartLabel::RightLeg);
    seg("foot_r", {0, -0.04, 0.14}, 0.048, PartLabel::RightLeg);
    return body;
}

double segment_distance(const Vec3d& p, const Vec3d& a, const Vec3d& b) {
    const Vec3d ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / std::max(ab.squared_norm(), 1e-30), 0.0, 1.0);
    return (p - (a + ab * t)).norm();
}

// Smooth-union signed distance of all capsules.
double body_sdf(const BodySpec& body, const Vec3d& p) {
    constexpr double k = 48.0;
    double acc = 0;
    for (const auto& s : body.shapes)
        acc += std::exp(-k * (segment_distance(p, s.head, s.tail) - s.radius));
    return -std::log(std::max(acc, 1e-300)) / k;
}

// Joint-limit table: radian scale per bone axis, shaped so limbs articulate
// and the torso stays mostly upright. Root is fixed (no global motion).
Vec3d joint_limit(const Skeleton& skel, std::size_t bone, double range) {
    const std::string& name = skel.names[bone];
    if (name == "root") return {0, 0, 0};
    if (name == "spine" || name == "head") return {0.25 * range, 0.25 * range, 0.25 * range};
    if (name.rfind("shoulder", 0) == 0) return {0.3 * range, 0.3 * range, 0.3 * range};
    if (name.rfind("upper_arm", 0) == 0) return {range, 0.8 * range, range};
    if (name.rfind("forearm", 0) == 0) return {0.3 * range, 1.6 * range, 0.3 * range};
    if (name.rfind("hand", 0) == 0) return {0.6 * range, 0.6 * range, 0.6 * range};
    if (name.rfind("thigh", 0) == 0) return {range, 0.4 * range, 0.6 * range};
    if (name.rfind("shin", 0) == 0) return {1.5 * range, 0.2 * range, 0.2 * range};
    if (name.rfind("foot", 0) == 0) return {0.6 * range, 0.2 * range, 0.2 * range};
    return {range, range, range};
}

}  // namespace

const char* part_name(PartLabel label) { return kPartNames[static_cast<std::size_t>(label)]; }

PartLabel part_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kPartCount; ++i)
        if (name == kPartNames[i]) return static_cast<PartLabel>(i);
    throw Error("unknown part label '" + name + "'");
}

double SyntheticSubject::bump_gain(const PoseParams& pose) const {
    double acc = 0;
    for (std::size_t b = 0; b < pose.body_pose.size(); ++b)
        acc += (pose.body_pose[b] - template_pose.body_pose[b]).norm();
    return std::min(1.0, acc / 6.0);
}

TriangleMesh SyntheticSubject::pose_rigid(std::size_t pose_index) const {
    const BoneTransforms bt = forward_kinematics(skeleton, poses[pose_index], template_pose);
    OrientedPointCloud cloud;
    cloud.positions = template_mesh.vertices;
    cloud.normals = template_mesh.vertex_normals();
    const OrientedPointCloud posed = lbs_apply(cloud, vertex_weights, bt);
    TriangleMesh out = template_mesh;
    out.vertices = posed.positions;
    return out;
}

SyntheticSubject generate_subject(std::uint64_t seed, std::size_t pose_count,
                                  const SubjectParams& params) {
    if (pose_count < 2) throw Error("generate_subject: pose_count must be >= 2");
    SyntheticSubject subject;
    subject.seed = seed;
    subject.params = params;

    const BodySpec body = make_body();
    subject.skeleton = body.skeleton;
    const std::size_t nb = body.skeleton.bone_count();
    subject.template_pose = PoseParams::rest(nb, params.expression_dim);

    // Template surface: marching cubes over the smooth capsule union.
    Aabb bounds;
    for (const auto& s : body.shapes) {
        const Vec3d pad{s.radius + 0.05, s.radius + 0.05, s.radius + 0.05};
        bounds.expand(s.head - pad);
        bounds.expand(s.head + pad);
        bounds.expand(s.tail - pad);
        bounds.expand(s.tail + pad);
    }
    const GridLayout layout = GridLayout::fit(bounds, params.mesh_resolution, 1.15);
    ScalarGrid sdf(layout);
    const int r = layout.resolution;
    for (int k = 0; k < r; ++k)
        for (int j = 0; j < r; ++j)
            for (int i = 0; i < r; ++i)
                sdf.at(i, j, k) = body_sdf(body, layout.position(i, j, k));
    subject.template_mesh = marching_cubes(sdf, 0.0);

    const std::size_t nv = subject.template_mesh.vertex_count();

    // Ground-truth weights: exponential falloff in capsule surface distance.
    subject.vertex_weights.bone_count = nb;
    subject.vertex_weights.values.resize(nv * nb);
    subject.vertex_labels.resize(nv);
    for (std::size_t v = 0; v < nv; ++v) {
        const Vec3d p(subject.template_mesh.vertices[v]);
        double* row = subject.vertex_weights.row(v);
        double sum = 0;
        double best = -1;
        std::size_t best_bone = 0;
        for (std::size_t b = 0; b < nb; ++b) {
            const auto& s = body.shapes[b];
            const double d = std::max(0.0, segment_distance(p, s.head, s.tail) - s.radius);
            row[b] = std::exp(-params.weight_sharpness * d);
            sum += row[b];
            if (row[b] > best) {
                best = row[b];
                best_bone = b;
            }
        }
        for (std::size_t b = 0; b < nb; ++b) row[b] /= sum;
        subject.vertex_labels[v] = static_cast<std::uint8_t>(body.shapes[best_bone].part);
    }

    // Face labels: majority vote, ties to the lowest label value.
    subject.template_mesh.face_labels.resize(subject.template_mesh.face_count());
    for (std::size_t f = 0; f < subject.template_mesh.face_count(); ++f) {
        const auto& t = subject.template_mesh.faces[f];
        const std::uint8_t a = subject.vertex_labels[t[0]];
        const std::uint8_t b = subject.vertex_labels[t[1]];
        const std::uint8_t c = subject.vertex_labels[t[2]];
        std::uint8_t label;
        if (a == b || a == c) label = a;
        else if (b == c) label = b;
        else label = std::min({a, b, c});
        subject.template_mesh.face_labels[f] = label;
    }

    // Two-tone colors per part: a base tone plus a circular accent patch
    // anchored at a seeded surface point of that part.
    Rng rng(seed);
    const Vec3f base_tones[kPartCount] = {
        {0.85f, 0.72f, 0.60f}, {0.20f, 0.30f, 0.65f}, {0.70f, 0.20f, 0.20f}, {0.20f, 0.60f, 0.25f},
        {0.85f, 0.80f, 0.25f}, {0.55f, 0.25f, 0.60f}, {0.25f, 0.55f, 0.60f}, {0.70f, 0.45f, 0.15f},
    };
    const Vec3f accent_tones[kPartCount] = {
        {0.35f, 0.22f, 0.10f}, {0.75f, 0.80f, 0.95f}, {0.15f, 0.65f, 0.70f}, {0.75f, 0.15f, 0.60f},
        {0.25f, 0.30f, 0.80f}, {0.95f, 0.75f, 0.20f}, {0.80f, 0.20f, 0.15f}, {0.15f, 0.20f, 0.70f},
    };
    std::vector<std::vector<std::uint32_t>> part_vertices(kPartCount);
    for (std::size_t v = 0; v < nv; ++v) part_vertices[subject.vertex_labels[v]].push_back(v);
    Vec3d anchors[kPartCount];
    double patch_radius[kPartCount];
    for (std::size_t part = 0; part < kPartCount; ++part) {
        if (part_vertices[part].empty()) {
            anchors[part] = {1e9, 1e9, 1e9};
            patch_radius[part] = 0;
            continue;
        }
        const auto& ids = part_vertices[part];
        anchors[part] = Vec3d(subject.template_mesh.vertices[ids[rng.uniform_index(ids.size())]]);
        patch_radius[part] = rng.uniform(0.04, 0.07);
    }
    subject.template_mesh.vertex_colors.resize(nv);
    for (std::size_t v = 0; v < nv; ++v) {
        const std::size_t part = subject.vertex_labels[v];
        const bool accent =
            (Vec3d(subject.template_mesh.vertices[v]) - anchors[part]).norm() < patch_radius[part];
        subject.template_mesh.vertex_colors[v] = accent ? accent_tones[part] : base_tones[part];
    }

    // Poses: rest first, then limb poses inside joint limits.
    subject.poses.push_back(subject.template_pose);
    for (std::size_t p = 1; p < pose_count; ++p) {
        PoseParams pose = PoseParams::rest(nb, params.expression_dim);
        for (std::size_t b = 0; b < nb; ++b) {
            const Vec3d lim = joint_limit(subject.skeleton, b, params.pose_range);
            pose.body_pose[b] = {rng.uniform(-lim.x, lim.x), rng.uniform(-lim.y, lim.y),
                                 rng.uniform(-lim.z, lim.z)};
        }
        for (auto& e : pose.expression) e = rng.uniform(-1, 1);
        subject.poses.push_back(std::move(pose));
    }

    // Posed scans: rigid LBS plus the pose-gated bump displacement along the
    // posed normals. Bump phase is anchored in template coordinates so the
    // same material point carries the same bump across poses.
    const Vec3d u1 = Vec3d{0.81, 0.34, 0.47}.normalized();
    const Vec3d u2 = Vec3d{-0.27, 0.88, 0.39}.normalized();
    const double phase1 = rng.uniform(0, 6.28), phase2 = rng.uniform(0, 6.28);
    for (std::size_t p = 0; p < pose_count; ++p) {
        TriangleMesh posed = subject.pose_rigid(p);
        const double gain = subject.bump_gain(subject.poses[p]) * params.bump_amplitude;
        if (gain > 0) {
            const std::vector<Vec3f> normals = posed.vertex_normals();
            for (std::size_t v = 0; v < nv; ++v) {
                const Vec3d t(subject.template_mesh.vertices[v]);
                const double bump = std::sin(params.bump_frequency * t.dot(u1) + phase1) *
                                    std::sin(params.bump_frequency * t.dot(u2) + phase2);
                posed.vertices[v] = Vec3f(Vec3d(posed.vertices[v]) + Vec3d(normals[v]) * (gain * bump));
            }
        }
        posed.vertex_colors = subject.template_mesh.vertex_colors;
        posed.face_labels = subject.template_mesh.face_labels;
        subject.scans.push_back(std::move(posed));
    }
    return subject;
}

void save_subject(const SyntheticSubject& subject, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "poses");
    std::filesystem::create_directories(dir / "scans");
    write_skeleton_json(subject.skeleton, dir / "skeleton.json");
    write_ply(subject.template_mesh, dir / "template.ply");

    std::ofstream labels(dir / "vertex_labels.txt");
    for (auto l : subject.vertex_labels) labels << static_cast<int>(l) << "\n";

    Checkpoint weights;
    weights.add_f32("weights", subject.vertex_weights.values,
                    {subject.vertex_weights.point_count(), subject.vertex_weights.bone_count});
    weights.write(dir / "weights.spav");

    for (std::size_t p = 0; p < subject.pose_count(); ++p) {
        char name[32];
        std::snprintf(name, sizeof name, "pose_%03zu.json", p);
        write_pose_json(subject.poses[p], dir / "poses" / name);
        std::snprintf(name, sizeof name, "scan_%03zu.ply", p);
        write_ply(subject.scans[p], dir / "scans" / name);
    }
    nlohmann::json meta{{"seed", subject.seed},
                        {"pose_count", subject.pose_count()},
                        {"mesh_resolution", subject.params.mesh_resolution},
                        {"bump_amplitude", subject.params.bump_amplitude},
                        {"bump_frequency", subject.params.bump_frequency},
                        {"weight_sharpness", subject.params.weight_sharpness},
                        {"pose_range", subject.params.pose_range},
                        {"expression_dim", subject.params.expression_dim}};
    std::ofstream meta_out(dir / "subject.json");
    meta_out << meta.dump(2) << "\n";
}

SyntheticSubject load_subject(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "subject.json");
    if (!meta_in) throw IoError("cannot open " + (dir / "subject.json").string());
    nlohmann::json meta = nlohmann::json::parse(meta_in);

    SyntheticSubject subject;
    subject.seed = meta.at("seed").get<std::uint64_t>();
    subject.params.mesh_resolution = meta.at("mesh_resolution").get<int>();
    subject.params.bump_amplitude = meta.at("bump_amplitude").get<double>();
    subject.params.bump_frequency = meta.at("bump_frequency").get<double>();
    subject.params.weight_sharpness = meta.at("weight_sharpness").get<double>();
    subject.params.pose_range = meta.at("pose_range").get<double>();
    subject.params.expression_dim = meta.at("expression_dim").get<std::size_t>();

    subject.skeleton = read_skeleton_json(dir / "skeleton.json");
    subject.template_mesh = read_ply(dir / "template.ply").to_mesh();

    std::ifstream labels(dir / "vertex_labels.txt");
    int value;
    while (labels >> value) subject.vertex_labels.push_back(static_cast<std::uint8_t>(value));
    if (subject.vertex_labels.size() != subject.template_mesh.vertex_count())
        throw ParseError("vertex_labels.txt length mismatch");

    const Checkpoint weights = Checkpoint::read(dir / "weights.spav");
    subject.vertex_weights.bone_count = subject.skeleton.bone_count();
    subject.vertex_weights.values = weights.get_f32_as_f64("weights");

    const std::size_t pose_count = meta.at("pose_count").get<std::size_t>();
    for (std::size_t p = 0; p < pose_count; ++p) {
        char name[32];
        std::snprintf(name, sizeof name, "pose_%03zu.json", p);
        subject.poses.push_back(read_pose_json(dir / "poses" / name));
        std::snprintf(name, sizeof name, "scan_%03zu.ply", p);
        subject.scans.push_back(read_ply(dir / "scans" / name).to_mesh());
    }
    subject.template_pose = subject.poses.empty()
                                ? PoseParams::rest(subject.skeleton.bone_count())
                                : subject.poses[0];
    return subject;
}

}  // namespace spav
