#include "spav/skeleton.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace spav {

int Skeleton::find_bone(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

void Skeleton::validate() const {
    if (parent.size() != rest_offsets.size() || parent.size() != names.size())
        throw DimensionMismatch("skeleton: field lengths disagree");
    std::size_t roots = 0;
    for (std::size_t i = 0; i < parent.size(); ++i) {
        if (!parent[i].has_value()) {
            ++roots;
            continue;
        }
        if (*parent[i] >= i)
            throw Error("skeleton: parent of bone " + std::to_string(i) + " does not precede it");
    }
    if (roots != 1) throw Error("skeleton: expected exactly one root, found " + std::to_string(roots));
}

SkinningWeights SkinningWeights::one_hot(std::size_t points, std::size_t bones, std::uint32_t bone) {
    SkinningWeights w;
    w.bone_count = bones;
    w.values.assign(points * bones, 0.0);
    for (std::size_t i = 0; i < points; ++i) w.values[i * bones + bone] = 1.0;
    return w;
}

void SkinningWeights::validate(double tol) const {
    for (std::size_t i = 0; i < point_count(); ++i) {
        double sum = 0;
        for (std::size_t b = 0; b < bone_count; ++b) {
            const double v = row(i)[b];
            if (v < 0) throw InvalidWeights("skinning weights: negative entry at row " + std::to_string(i));
            sum += v;
        }
        if (std::fabs(sum - 1.0) > tol)
            throw InvalidWeights("skinning weights: row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
}

Mat3d euler_to_rotation(const Vec3d& angles) {
    const double ca = std::cos(angles.x), sa = std::sin(angles.x);
    const double cb = std::cos(angles.y), sb = std::sin(angles.y);
    const double cg = std::cos(angles.z), sg = std::sin(angles.z);
    // R = Rz(g) Ry(b) Rx(a)
    Mat3d r;
    r(0, 0) = cg * cb;
    r(0, 1) = cg * sb * sa - sg * ca;
    r(0, 2) = cg * sb * ca + sg * sa;
    r(1, 0) = sg * cb;
    r(1, 1) = sg * sb * sa + cg * ca;
    r(1, 2) = sg * sb * ca - cg * sa;
    r(2, 0) = -sb;
    r(2, 1) = cb * sa;
    r(2, 2) = cb * ca;
    return r;
}

namespace {

std::vector<Transform> compose_chain(const Skeleton& skel, const PoseParams& pose) {
    std::vector<Transform> out(skel.bone_count());
    for (std::size_t i = 0; i < skel.bone_count(); ++i) {
        const Transform local{euler_to_rotation(pose.body_pose[i]), skel.rest_offsets[i]};
        out[i] = skel.parent[i].has_value() ? out[*skel.parent[i]] * local : local;
    }
    return out;
}

}  // namespace

BoneTransforms forward_kinematics(const Skeleton& skel, const PoseParams& pose,
                                  const PoseParams& template_pose) {
    skel.validate();
    if (pose.body_pose.size() != skel.bone_count() || template_pose.body_pose.size() != skel.bone_count())
        throw DimensionMismatch("forward_kinematics: pose length != bone count");
    BoneTransforms bt;
    bt.posed = compose_chain(skel, pose);
    bt.canonical = compose_chain(skel, template_pose);
    return bt;
}

std::vector<Transform> BoneTransforms::skinning_motions() const {
    std::vector<Transform> motions(posed.size());
    for (std::size_t i = 0; i < posed.size(); ++i) motions[i] = posed[i] * canonical[i].inverse();
    return motions;
}

void lbs_apply_raw(const std::vector<Vec3d>& positions, const std::vector<Vec3d>& normals,
                   const SkinningWeights& weights, const std::vector<Transform>& motions,
                   std::vector<Vec3d>& out_positions, std::vector<Vec3d>& out_normals) {
    const std::size_t n = positions.size();
    const std::size_t nb = weights.bone_count;
    out_positions.resize(n);
    out_normals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* w = weights.row(i);
        Vec3d p{0, 0, 0}, nrm{0, 0, 0};
        for (std::size_t b = 0; b < nb; ++b) {
            if (w[b] == 0.0) continue;
            p += w[b] * motions[b].apply_point(positions[i]);
            nrm += w[b] * motions[b].apply_dir(normals[i]);
        }
        out_positions[i] = p;
        out_normals[i] = nrm.normalized(1e-30);
    }
}

OrientedPointCloud lbs_apply(const OrientedPointCloud& points, const SkinningWeights& weights,
                             const BoneTransforms& bt) {
    if (weights.point_count() != points.size())
        throw DimensionMismatch("lbs_apply: weight rows != point count");
    if (weights.bone_count != bt.bone_count())
        throw DimensionMismatch("lbs_apply: weight columns != bone count");
    weights.validate();

    const auto motions = bt.skinning_motions();
    std::vector<Vec3d> pos(points.size()), nrm(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        pos[i] = Vec3d(points.positions[i]);
        nrm[i] = Vec3d(points.normals[i]);
    }
    std::vector<Vec3d> out_pos, out_nrm;
    lbs_apply_raw(pos, nrm, weights, motions, out_pos, out_nrm);

    OrientedPointCloud out;
    out.positions.resize(points.size());
    out.normals.resize(points.size());
    out.colors = points.colors;
    for (std::size_t i = 0; i < points.size(); ++i) {
        out.positions[i] = Vec3f(out_pos[i]);
        out.normals[i] = Vec3f(out_nrm[i]);
    }
    return out;
}

OrientedPointCloud canonical_to_pose(const OrientedPointCloud& points, const SkinningWeights& weights,
                                     const Skeleton& skel, const PoseParams& pose,
                                     const PoseParams& template_pose) {
    return lbs_apply(points, weights, forward_kinematics(skel, pose, template_pose));
}

// --- JSON ---

std::string skeleton_to_json(const Skeleton& skel) {
    nlohmann::json bones = nlohmann::json::array();
    for (std::size_t i = 0; i < skel.bone_count(); ++i) {
        bones.push_back({{"name", skel.names[i]},
                         {"parent", skel.parent[i].has_value() ? static_cast<int>(*skel.parent[i]) : -1},
                         {"offset", {skel.rest_offsets[i].x, skel.rest_offsets[i].y, skel.rest_offsets[i].z}}});
    }
    return nlohmann::json{{"bones", bones}}.dump(2);
}

Skeleton skeleton_from_json(const std::string& text) {
    Skeleton skel;
    nlohmann::json j = nlohmann::json::parse(text);
    for (const auto& b : j.at("bones")) {
        skel.names.push_back(b.at("name").get<std::string>());
        const int parent = b.at("parent").get<int>();
        skel.parent.push_back(parent < 0 ? std::nullopt
                                         : std::optional<std::uint32_t>(static_cast<std::uint32_t>(parent)));
        const auto& o = b.at("offset");
        skel.rest_offsets.push_back({o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()});
    }
    skel.validate();
    return skel;
}

void write_skeleton_json(const Skeleton& skel, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << skeleton_to_json(skel) << "\n";
}

Skeleton read_skeleton_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return skeleton_from_json(text);
}

std::string pose_to_json(const PoseParams& pose) {
    nlohmann::json body = nlohmann::json::array();
    for (const auto& a : pose.body_pose) body.push_back({a.x, a.y, a.z});
    return nlohmann::json{{"body_pose", body}, {"expression", pose.expression}}.dump(2);
}

PoseParams pose_from_json(const std::string& text) {
    PoseParams pose;
    nlohmann::json j = nlohmann::json::parse(text);
    for (const auto& a : j.at("body_pose"))
        pose.body_pose.push_back({a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()});
    if (j.contains("expression")) pose.expression = j.at("expression").get<std::vector<double>>();
    return pose;
}

void write_pose_json(const PoseParams& pose, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << pose_to_json(pose) << "\n";
}

PoseParams read_pose_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return pose_from_json(text);
}

}  // namespace spav
