#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spav/deformation.hpp"
#include "spav/losses.hpp"
#include "spav/rng.hpp"

using namespace spav;

namespace {

Skeleton small_skeleton() {
    Skeleton s;
    s.parent = {std::nullopt, 0, 1};
    s.rest_offsets = {{0, 0, 0}, {0, 0.4, 0}, {0, 0.4, 0}};
    s.names = {"root", "mid", "tip"};
    return s;
}

NetSizes tiny_sizes() {
    NetSizes n;
    n.deltanet_depth = 3;
    n.deltanet_width = 8;
    n.deltanet_skip = 1;
    n.lbsnet_depth = 2;
    n.lbsnet_width = 8;
    n.encoder_width = 8;
    n.pose_code_dim = 4;
    n.pe_levels = 2;
    return n;
}

DeformationModel tiny_model(Rng& rng) {
    const Skeleton s = small_skeleton();
    return DeformationModel::init(s, PoseParams::rest(3), 2, tiny_sizes(), rng);
}

OrientedPointCloud strip_cloud(std::size_t n, Rng& rng) {
    OrientedPointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        c.positions.push_back(Vec3f{static_cast<float>(rng.uniform(-0.2, 0.2)),
                                    static_cast<float>(rng.uniform(0, 0.8)),
                                    static_cast<float>(rng.uniform(-0.2, 0.2))});
        c.normals.push_back(Vec3f(Vec3d{rng.normal(), rng.normal(), rng.normal()}.normalized()));
    }
    return c;
}

PoseParams random_pose(std::size_t bones, Rng& rng, double scale = 0.8) {
    PoseParams p = PoseParams::rest(bones, 2);
    for (std::size_t b = 1; b < bones; ++b)
        p.body_pose[b] = {rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
    for (auto& e : p.expression) e = rng.uniform(-1, 1);
    return p;
}

}  // namespace

TEST_CASE("delta_forward: fresh model emits near-zero offsets") {
    Rng rng(1);
    DeformationModel model = tiny_model(rng);
    OrientedPointCloud cloud = strip_cloud(32, rng);
    const auto [delta, theta] = delta_forward(model, cloud, random_pose(3, rng));
    for (const auto& d : delta) CHECK(d.norm() < 1e-3);
    for (const auto& t : theta) CHECK(t.norm() < 1e-3);
}

TEST_CASE("delta_forward: conditioning on pose is live") {
    Rng rng(2);
    DeformationModel model = tiny_model(rng);
    // Break the near-zero init so conditioning differences are visible.
    for (auto& v : model.deltanet.weights.back().values) v *= 1e4;
    OrientedPointCloud cloud = strip_cloud(16, rng);
    const auto [d1, t1] = delta_forward(model, cloud, random_pose(3, rng));
    const auto [d2, t2] = delta_forward(model, cloud, random_pose(3, rng));
    double diff = 0;
    for (std::size_t i = 0; i < d1.size(); ++i) diff += (d1[i] - d2[i]).norm();
    CHECK(diff > 1e-9);
}

TEST_CASE("delta_forward: gradient of sum |delta|^2 matches finite differences") {
    Rng rng(3);
    DeformationModel model = tiny_model(rng);
    OrientedPointCloud cloud = strip_cloud(8, rng);
    const PoseParams pose = random_pose(3, rng);
    std::vector<Vec3d> pos(cloud.size()), nrm(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        pos[i] = Vec3d(cloud.positions[i]);
        nrm[i] = Vec3d(cloud.normals[i]);
    }

    auto scalar = [&]() {
        DeformGraph g = deform_graph(model, pos, nrm, pose);
        double s = 0;
        for (double v : g.tape.value(g.delta).values) s += v * v;
        return s;
    };

    DeformGraph g = deform_graph(model, pos, nrm, pose);
    const auto loss = g.tape.sum_all(g.tape.square(g.delta));
    model.zero_grad();
    g.tape.backward_scalar(loss);

    for (Tensor* p : model.deltanet_parameters()) {
        const auto fd = oracle::fd_grad(*p, scalar, 1e-6);
        CHECK(oracle::rel_error(p->grad, fd) < 1e-4);
    }
}

TEST_CASE("apply_delta: closed forms") {
    Rng rng(4);
    OrientedPointCloud cloud = strip_cloud(12, rng);

    const std::vector<Vec3d> zero3(12, Vec3d{0, 0, 0});
    const OrientedPointCloud same = apply_delta(cloud, zero3, zero3);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(same.positions[i] == cloud.positions[i]);
        CHECK((Vec3d(same.normals[i]) - Vec3d(cloud.normals[i])).norm() < 1e-7);
    }

    const std::vector<Vec3d> dz(12, Vec3d{0, 0, 0.1});
    const OrientedPointCloud moved = apply_delta(cloud, dz, zero3);
    for (std::size_t i = 0; i < 12; ++i)
        CHECK(moved.positions[i].z == doctest::Approx(cloud.positions[i].z + 0.1).epsilon(1e-6));

    // theta = (pi,0,0) negates the y and z components of the normals.
    const std::vector<Vec3d> pitch(12, Vec3d{M_PI, 0, 0});
    const OrientedPointCloud spun = apply_delta(cloud, zero3, pitch);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(spun.normals[i].x == doctest::Approx(cloud.normals[i].x).epsilon(1e-6));
        CHECK(spun.normals[i].y == doctest::Approx(-cloud.normals[i].y).epsilon(1e-6));
        CHECK(spun.normals[i].z == doctest::Approx(-cloud.normals[i].z).epsilon(1e-6));
    }
}

TEST_CASE("lbs_weights: rows are a valid scaled softmax") {
    Rng rng(5);
    DeformationModel model = tiny_model(rng);
    OrientedPointCloud cloud = strip_cloud(20, rng);
    const SkinningWeights w = lbs_weights(model, cloud.positions);
    REQUIRE(w.point_count() == 20);
    REQUIRE(w.bone_count == 3);
    for (std::size_t i = 0; i < 20; ++i) {
        double sum = 0;
        for (std::size_t b = 0; b < 3; ++b) {
            CHECK(w.row(i)[b] >= 0.0);
            sum += w.row(i)[b];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
    // Identical query points produce identical rows.
    const SkinningWeights w2 = lbs_weights(model, {cloud.positions[3], cloud.positions[3]});
    for (std::size_t b = 0; b < 3; ++b) CHECK(w2.row(0)[b] == w2.row(1)[b]);
}

TEST_CASE("deform: template pose with zero delta is the identity") {
    Rng rng(6);
    DeformationModel model = tiny_model(rng);
    OrientedPointCloud cloud = strip_cloud(24, rng);
    DeformOptions opts;
    opts.force_zero_delta = true;
    const DeformedBatch batch = deform(model, cloud, model.template_pose, opts);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK((batch.posed_positions[i] - Vec3d(cloud.positions[i])).norm() < 1e-9);
        CHECK((batch.canonical_positions[i] - Vec3d(cloud.positions[i])).norm() < 1e-12);
    }
}

TEST_CASE("deform: injected ground-truth weights reduce to plain LBS") {
    Rng rng(7);
    DeformationModel model = tiny_model(rng);
    OrientedPointCloud cloud = strip_cloud(24, rng);
    const PoseParams pose = random_pose(3, rng);

    SkinningWeights gt;
    gt.bone_count = 3;
    for (std::size_t i = 0; i < 24; ++i) {
        double row[3] = {rng.uniform(0.05, 1), rng.uniform(0.05, 1), rng.uniform(0.05, 1)};
        const double sum = row[0] + row[1] + row[2];
        for (double v : row) gt.values.push_back(v / sum);
    }

    DeformOptions opts;
    opts.force_zero_delta = true;
    opts.inject_weights = &gt;
    const DeformedBatch batch = deform(model, cloud, pose, opts);

    // Plain-LBS reference on the same f64 inputs.
    std::vector<Vec3d> pos(24), nrm(24), out_pos, out_nrm;
    for (std::size_t i = 0; i < 24; ++i) {
        pos[i] = Vec3d(cloud.positions[i]);
        nrm[i] = Vec3d(cloud.normals[i]);
    }
    const auto motions = forward_kinematics(model.skeleton, pose, model.template_pose).skinning_motions();
    lbs_apply_raw(pos, nrm, gt, motions, out_pos, out_nrm);
    for (std::size_t i = 0; i < 24; ++i) {
        CHECK((batch.posed_positions[i] - out_pos[i]).norm() < 1e-9);
        CHECK((batch.posed_normals[i] - out_nrm[i]).norm() < 1e-9);
    }
}

TEST_CASE("deform: deterministic and unit output normals") {
    Rng rng(8);
    DeformationModel model = tiny_model(rng);
    OrientedPointCloud cloud = strip_cloud(16, rng);
    const PoseParams pose = random_pose(3, rng);
    const DeformedBatch a = deform(model, cloud, pose);
    const DeformedBatch b = deform(model, cloud, pose);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(a.posed_positions[i] == b.posed_positions[i]);
        CHECK(std::fabs(a.posed_normals[i].norm() - 1.0) < 1e-6);
    }
    a.weights.validate(1e-9);
}

TEST_CASE("deform: chamfer gradient through the whole pipeline matches FD") {
    Rng rng(9);
    DeformationModel model = tiny_model(rng);
    // Give delta some magnitude so the test is not trivially flat.
    for (auto& v : model.deltanet.weights.back().values) v *= 100.0;
    OrientedPointCloud cloud = strip_cloud(24, rng);
    const PoseParams pose = random_pose(3, rng, 0.5);
    std::vector<Vec3d> pos(cloud.size()), nrm(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        pos[i] = Vec3d(cloud.positions[i]);
        nrm[i] = Vec3d(cloud.normals[i]);
    }
    std::vector<Vec3d> target(24);
    for (auto& t : target) t = {rng.uniform(-0.3, 0.3), rng.uniform(0, 1), rng.uniform(-0.3, 0.3)};

    auto scalar = [&]() {
        DeformGraph g = deform_graph(model, pos, nrm, pose);
        return chamfer_value(g.values3(g.posed_positions), target);
    };

    DeformGraph g = deform_graph(model, pos, nrm, pose);
    const PointLoss loss = chamfer(g.values3(g.posed_positions), target);
    std::vector<double> seed;
    for (const auto& v : loss.grad) {
        seed.push_back(v.x);
        seed.push_back(v.y);
        seed.push_back(v.z);
    }
    model.zero_grad();
    g.tape.seed(g.posed_positions, seed);
    g.tape.backward();

    for (Tensor* p : model.parameters()) {
        const auto fd = oracle::fd_grad(*p, scalar, 1e-5);
        CHECK(oracle::rel_error(p->grad, fd) < 1e-4);
    }
}

TEST_CASE("lbs_weights: grouped softmax mode keeps the invariants") {
    Rng rng(11);
    DeformationModel model = tiny_model(rng);
    model.config.hierarchical_softmax = true;
    OrientedPointCloud cloud = strip_cloud(16, rng);
    const SkinningWeights w = lbs_weights(model, cloud.positions);
    for (std::size_t i = 0; i < 16; ++i) {
        double sum = 0;
        for (std::size_t b = 0; b < 3; ++b) {
            CHECK(w.row(i)[b] >= 0.0);
            sum += w.row(i)[b];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
    // Differentiable: reg gradient against finite differences.
    std::vector<Vec3d> pos(4);
    for (auto& p : pos) p = {rng.uniform(-0.2, 0.2), rng.uniform(0, 0.8), rng.uniform(-0.2, 0.2)};
    std::vector<double> ref(4 * 3, 1.0 / 3.0);
    auto scalar = [&]() {
        Tape tape;
        const auto node = lbs_weights_graph(model, tape, pos);
        return reg_loss(tape.value(node).values, ref, 3, {}).value;
    };
    Tape tape;
    const auto node = lbs_weights_graph(model, tape, pos);
    const RegLoss reg = reg_loss(tape.value(node).values, ref, 3, {});
    model.zero_grad();
    tape.seed(node, reg.grad_weights);
    tape.backward();
    for (Tensor* p : model.lbsnet_parameters()) {
        const auto fd = oracle::fd_grad(*p, scalar, 1e-6);
        CHECK(oracle::rel_error(p->grad, fd) < 1e-4);
    }

    // Flag survives the checkpoint round trip.
    Checkpoint ck;
    model.save(ck);
    const DeformationModel back = DeformationModel::load(Checkpoint::deserialize(ck.serialize()));
    CHECK(back.config.hierarchical_softmax);
}

TEST_CASE("deform: checkpoint round trip preserves the forward map") {
    Rng rng(10);
    DeformationModel model = tiny_model(rng);
    OrientedPointCloud cloud = strip_cloud(8, rng);
    const PoseParams pose = random_pose(3, rng);

    Checkpoint ck;
    model.save(ck);
    const auto bytes = ck.serialize();
    DeformationModel back = DeformationModel::load(Checkpoint::deserialize(bytes));

    // f32 storage: reload once to land on the f32 grid, then compare bitwise.
    Checkpoint ck2;
    back.save(ck2);
    CHECK(ck2.serialize() == bytes);

    const DeformedBatch a = deform(back, cloud, pose);
    DeformationModel again = DeformationModel::load(Checkpoint::deserialize(ck2.serialize()));
    const DeformedBatch b = deform(again, cloud, pose);
    for (std::size_t i = 0; i < 8; ++i) CHECK(a.posed_positions[i] == b.posed_positions[i]);
}
