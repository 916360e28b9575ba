#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spav/rng.hpp"
#include "spav/skeleton.hpp"

using namespace spav;

namespace {

Skeleton chain(std::size_t bones, const Vec3d& offset) {
    Skeleton s;
    for (std::size_t i = 0; i < bones; ++i) {
        s.parent.push_back(i == 0 ? std::nullopt : std::optional<std::uint32_t>(static_cast<std::uint32_t>(i - 1)));
        s.rest_offsets.push_back(i == 0 ? Vec3d{0, 0, 0} : offset);
        s.names.push_back("bone" + std::to_string(i));
    }
    return s;
}

OrientedPointCloud random_cloud(std::size_t n, Rng& rng) {
    OrientedPointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        c.positions.push_back(Vec3f{static_cast<float>(rng.uniform(-1, 1)),
                                    static_cast<float>(rng.uniform(-1, 1)),
                                    static_cast<float>(rng.uniform(-1, 1))});
        c.normals.push_back(Vec3f(Vec3d{rng.normal(), rng.normal(), rng.normal()}.normalized()));
    }
    return c;
}

}  // namespace

TEST_CASE("euler_to_rotation: identity and axis rotations") {
    const Mat3d id = euler_to_rotation({0, 0, 0});
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(id(r, c) == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-15));

    // Quarter turn about x maps +y to +z.
    const Mat3d rx = euler_to_rotation({M_PI / 2, 0, 0});
    const Vec3d v = rx * Vec3d{0, 1, 0};
    CHECK(v.x == doctest::Approx(0).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(0).epsilon(1e-12));
    CHECK(v.z == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("euler_to_rotation: orthonormal with unit determinant") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        const Mat3d r = euler_to_rotation({rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)});
        const Mat3d rrt = r * r.transposed();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(std::fabs(rrt(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
        CHECK(r.det() == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("euler_to_rotation: matches the composed convention Rz*Ry*Rx") {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const Vec3d a{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const Mat3d rx = euler_to_rotation({a.x, 0, 0});
        const Mat3d ry = euler_to_rotation({0, a.y, 0});
        const Mat3d rz = euler_to_rotation({0, 0, a.z});
        const Mat3d composed = rz * (ry * rx);
        const Mat3d direct = euler_to_rotation(a);
        for (int i = 0; i < 9; ++i) CHECK(direct.m[i] == doctest::Approx(composed.m[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward_kinematics: zero pose and zero offsets give identity bones") {
    Skeleton s = chain(4, {0, 0, 0});
    const PoseParams rest = PoseParams::rest(4);
    const BoneTransforms bt = forward_kinematics(s, rest, rest);
    for (const auto& t : bt.posed) {
        CHECK(t.translation.norm() == 0.0);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) CHECK(t.rotation(i, j) == (i == j ? 1.0 : 0.0));
    }
}

TEST_CASE("forward_kinematics: two-bone chain accumulates offsets") {
    Skeleton s;
    s.parent = {std::nullopt, 0};
    s.rest_offsets = {{0, 1, 0}, {0, 1, 0}};
    s.names = {"root", "leaf"};
    const PoseParams rest = PoseParams::rest(2);
    const BoneTransforms bt = forward_kinematics(s, rest, rest);
    CHECK(bt.posed[1].translation.x == 0.0);
    CHECK(bt.posed[1].translation.y == 2.0);
    CHECK(bt.posed[1].translation.z == 0.0);
}

TEST_CASE("forward_kinematics: matches per-bone matrix product oracle") {
    Skeleton s = chain(3, {0.2, 0.5, -0.1});
    Rng rng(3);
    PoseParams pose = PoseParams::rest(3);
    for (auto& a : pose.body_pose) a = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const PoseParams rest = PoseParams::rest(3);
    const BoneTransforms bt = forward_kinematics(s, pose, rest);

    // Naive recomputation: explicit chain product per bone.
    for (std::size_t b = 0; b < 3; ++b) {
        Transform expected = Transform::identity();
        for (std::size_t i = 0; i <= b; ++i)
            expected = expected * Transform{euler_to_rotation(pose.body_pose[i]), s.rest_offsets[i]};
        CHECK((expected.translation - bt.posed[b].translation).norm() < 1e-12);
        for (int i = 0; i < 9; ++i)
            CHECK(expected.rotation.m[i] == doctest::Approx(bt.posed[b].rotation.m[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward_kinematics: dimension mismatch is rejected") {
    Skeleton s = chain(3, {0, 1, 0});
    CHECK_THROWS_AS(forward_kinematics(s, PoseParams::rest(2), PoseParams::rest(3)), DimensionMismatch);
}

TEST_CASE("lbs_apply: identity when pose equals template pose") {
    Skeleton s = chain(4, {0, 0.5, 0});
    Rng rng(4);
    PoseParams pose = PoseParams::rest(4);
    for (auto& a : pose.body_pose) a = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const BoneTransforms bt = forward_kinematics(s, pose, pose);

    OrientedPointCloud cloud = random_cloud(64, rng);
    SkinningWeights w;
    w.bone_count = 4;
    for (std::size_t i = 0; i < 64; ++i) {
        double row[4] = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
        const double sum = row[0] + row[1] + row[2] + row[3];
        for (double v : row) w.values.push_back(v / sum);
    }
    const OrientedPointCloud out = lbs_apply(cloud, w, bt);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK((Vec3d(out.positions[i]) - Vec3d(cloud.positions[i])).norm() < 1e-9);
        // f32-quantized normals are unit only to ~1e-7, so renormalization
        // may move them by one ulp; the operator itself adds nothing.
        CHECK((Vec3d(out.normals[i]) - Vec3d(cloud.normals[i])).norm() < 1e-6);
    }

    // With exactly-representable unit normals the identity is exact.
    OrientedPointCloud axis = cloud;
    for (std::size_t i = 0; i < axis.size(); ++i) {
        Vec3f n{0, 0, 0};
        n[static_cast<int>(i % 3)] = (i % 2 == 0) ? 1.0f : -1.0f;
        axis.normals[i] = n;
    }
    const OrientedPointCloud out2 = lbs_apply(axis, w, bt);
    for (std::size_t i = 0; i < axis.size(); ++i)
        CHECK((Vec3d(out2.normals[i]) - Vec3d(axis.normals[i])).norm() < 1e-9);
}

TEST_CASE("lbs_apply: one-hot weights with a pure translation") {
    Skeleton s;
    s.parent = {std::nullopt};
    s.rest_offsets = {{0, 0, 0}};
    s.names = {"root"};
    // Template puts the root at the origin; the pose translates it.
    BoneTransforms bt;
    bt.posed = {Transform::from_translation({0.3, -0.2, 0.7})};
    bt.canonical = {Transform::identity()};

    Rng rng(5);
    OrientedPointCloud cloud = random_cloud(16, rng);
    const SkinningWeights w = SkinningWeights::one_hot(16, 1, 0);
    const OrientedPointCloud out = lbs_apply(cloud, w, bt);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3d moved = Vec3d(cloud.positions[i]) + Vec3d{0.3, -0.2, 0.7};
        CHECK((Vec3d(out.positions[i]) - moved).norm() < 1e-7);
        CHECK((Vec3d(out.normals[i]) - Vec3d(cloud.normals[i])).norm() < 1e-7);
    }
}

TEST_CASE("lbs_apply: 50/50 blend of two translations averages them") {
    BoneTransforms bt;
    bt.posed = {Transform::from_translation({1, 0, 0}), Transform::from_translation({0, 1, 0})};
    bt.canonical = {Transform::identity(), Transform::identity()};

    OrientedPointCloud cloud;
    cloud.positions = {{0.1f, 0.2f, 0.3f}};
    cloud.normals = {{0, 0, 1}};
    SkinningWeights w;
    w.bone_count = 2;
    w.values = {0.5, 0.5};
    const OrientedPointCloud out = lbs_apply(cloud, w, bt);
    const Vec3d expect = Vec3d(cloud.positions[0]) + Vec3d{0.5, 0.5, 0};
    CHECK((Vec3d(out.positions[0]) - expect).norm() < 1e-7);
}

TEST_CASE("lbs_apply: one-hot weights act rigidly (pairwise distances kept)") {
    Skeleton s = chain(3, {0, 0.4, 0});
    Rng rng(6);
    PoseParams pose = PoseParams::rest(3);
    for (auto& a : pose.body_pose) a = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    const BoneTransforms bt = forward_kinematics(s, pose, PoseParams::rest(3));

    OrientedPointCloud cloud = random_cloud(40, rng);
    const SkinningWeights w = SkinningWeights::one_hot(40, 3, 2);
    const OrientedPointCloud out = lbs_apply(cloud, w, bt);
    for (std::size_t i = 0; i < 40; ++i) {
        CHECK(std::fabs(Vec3d(out.normals[i]).norm() - 1.0) < 1e-6);
        for (std::size_t j = i + 1; j < 40; ++j) {
            const double before = (Vec3d(cloud.positions[i]) - Vec3d(cloud.positions[j])).norm();
            const double after = (Vec3d(out.positions[i]) - Vec3d(out.positions[j])).norm();
            CHECK(std::fabs(before - after) < 1e-6);
        }
    }
}

TEST_CASE("lbs_apply: weight invariants enforced") {
    BoneTransforms bt;
    bt.posed = {Transform::identity()};
    bt.canonical = {Transform::identity()};
    OrientedPointCloud cloud;
    cloud.positions = {{0, 0, 0}};
    cloud.normals = {{0, 0, 1}};
    SkinningWeights w;
    w.bone_count = 1;
    w.values = {0.5};  // does not sum to 1
    CHECK_THROWS_AS(lbs_apply(cloud, w, bt), InvalidWeights);
    w.values = {-1.0};
    CHECK_THROWS_AS(lbs_apply(cloud, w, bt), InvalidWeights);
    SkinningWeights wrong_rows = SkinningWeights::one_hot(2, 1, 0);
    CHECK_THROWS_AS(lbs_apply(cloud, wrong_rows, bt), DimensionMismatch);
}

TEST_CASE("lbs gradients: blend matches finite differences") {
    // Jacobian-vector products of the blend w.r.t. points and weights.
    Rng rng(7);
    Skeleton s = chain(3, {0.1, 0.3, 0});
    PoseParams pose = PoseParams::rest(3);
    for (auto& a : pose.body_pose) a = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto motions = forward_kinematics(s, pose, PoseParams::rest(3)).skinning_motions();

    const std::int64_t n = 6;
    Tensor points({n, 3});
    for (auto& v : points.values) v = rng.uniform(-1, 1);
    Tensor weights({n, 3});
    for (std::int64_t i = 0; i < n; ++i) {
        double sum = 0;
        for (int b = 0; b < 3; ++b) {
            weights.values[i * 3 + b] = rng.uniform(0.1, 1.0);
            sum += weights.values[i * 3 + b];
        }
        for (int b = 0; b < 3; ++b) weights.values[i * 3 + b] /= sum;
    }
    // Scalar probe: weighted sum of outputs.
    std::vector<double> probe(static_cast<std::size_t>(n * 3));
    for (auto& v : probe) v = rng.uniform(-1, 1);

    auto eval = [&]() {
        Tape tape;
        const auto p = tape.leaf(points);
        const auto w = tape.leaf(weights);
        const auto out = tape.lbs_blend(p, w, motions, /*positions=*/true);
        const auto pr = tape.constant(n, 3, probe);
        return tape.sum_all(tape.mul(out, pr));
    };

    Tape tape;
    const auto p = tape.leaf(points);
    const auto w = tape.leaf(weights);
    const auto out = tape.lbs_blend(p, w, motions, true);
    const auto pr = tape.constant(n, 3, probe);
    const auto loss = tape.sum_all(tape.mul(out, pr));
    points.zero_grad();
    weights.zero_grad();
    tape.backward_scalar(loss);

    auto scalar = [&]() {
        Tape t2;
        (void)eval;
        const auto p2 = t2.leaf(points);
        const auto w2 = t2.leaf(weights);
        const auto o2 = t2.lbs_blend(p2, w2, motions, true);
        const auto pr2 = t2.constant(n, 3, probe);
        return t2.value(t2.sum_all(t2.mul(o2, pr2))).values[0];
    };
    const auto fd_points = oracle::fd_grad(points, scalar);
    const auto fd_weights = oracle::fd_grad(weights, scalar);
    CHECK(oracle::rel_error(points.grad, fd_points) < 1e-4);
    CHECK(oracle::rel_error(weights.grad, fd_weights) < 1e-4);
}

TEST_CASE("canonical_to_pose: template pose is the identity map") {
    Skeleton s = chain(4, {0, 0.5, 0});
    Rng rng(8);
    PoseParams tpose = PoseParams::rest(4);
    for (auto& a : tpose.body_pose) a = {rng.uniform(-0.5, 0.5), 0, rng.uniform(-0.5, 0.5)};
    OrientedPointCloud cloud = random_cloud(32, rng);
    const SkinningWeights w = SkinningWeights::one_hot(32, 4, 1);
    const OrientedPointCloud out = canonical_to_pose(cloud, w, s, tpose, tpose);
    for (std::size_t i = 0; i < 32; ++i)
        CHECK((Vec3d(out.positions[i]) - Vec3d(cloud.positions[i])).norm() < 1e-9);
}

TEST_CASE("canonical_to_pose: root rotation acts as a rigid rotation") {
    Skeleton s;
    s.parent = {std::nullopt};
    s.rest_offsets = {{0, 0, 0}};
    s.names = {"root"};
    PoseParams pose = PoseParams::rest(1);
    pose.body_pose[0] = {M_PI / 4, 0, 0};
    Rng rng(9);
    OrientedPointCloud cloud = random_cloud(20, rng);
    const SkinningWeights w = SkinningWeights::one_hot(20, 1, 0);
    const OrientedPointCloud out = canonical_to_pose(cloud, w, s, pose, PoseParams::rest(1));
    const Mat3d r = euler_to_rotation({M_PI / 4, 0, 0});
    for (std::size_t i = 0; i < 20; ++i) {
        const Vec3d expect = r * Vec3d(cloud.positions[i]);
        CHECK((Vec3d(out.positions[i]) - expect).norm() < 1e-6);
        const Vec3d en = r * Vec3d(cloud.normals[i]);
        CHECK((Vec3d(out.normals[i]) - en).norm() < 1e-6);
    }
}

TEST_CASE("skeleton json: round trip") {
    Skeleton s = chain(3, {0, 0.5, 0});
    const Skeleton back = skeleton_from_json(skeleton_to_json(s));
    REQUIRE(back.bone_count() == 3);
    CHECK(back.names == s.names);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.parent[i] == s.parent[i]);
        CHECK((back.rest_offsets[i] - s.rest_offsets[i]).norm() == 0.0);
    }
}

TEST_CASE("pose json: round trip") {
    PoseParams p = PoseParams::rest(2, 4);
    p.body_pose[1] = {0.1, -0.2, 0.3};
    p.expression[2] = 0.5;
    const PoseParams back = pose_from_json(pose_to_json(p));
    REQUIRE(back.body_pose.size() == 2);
    CHECK((back.body_pose[1] - p.body_pose[1]).norm() == 0.0);
    CHECK(back.expression == p.expression);
}

TEST_CASE("skeleton validation: cycles and multiple roots rejected") {
    Skeleton s;
    s.parent = {std::nullopt, std::nullopt};
    s.rest_offsets = {{0, 0, 0}, {0, 0, 0}};
    s.names = {"a", "b"};
    CHECK_THROWS_AS(s.validate(), Error);
}
