#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "spav/mesh_io.hpp"
#include "spav/sampling.hpp"
#include "spav/semantic.hpp"
#include "spav/shapes.hpp"
#include "spav/synthetic.hpp"

using namespace spav;

namespace {

SyntheticSubject& small_subject() {
    static SyntheticSubject subject = [] {
        SubjectParams params;
        params.mesh_resolution = 64;
        return generate_subject(3, 4, params);
    }();
    return subject;
}

LabeledTemplateMesh subject_template(const SyntheticSubject& s) {
    LabeledTemplateMesh t;
    t.mesh = s.template_mesh;
    t.vertex_labels = s.vertex_labels;
    t.vertex_weights = s.vertex_weights;
    return t;
}

}  // namespace

TEST_CASE("label_faces: uniform and majority cases") {
    TriangleMesh quad = make_unit_quad();
    const std::vector<std::uint8_t> all_head(4, 0);
    const LabeledTemplateMesh uniform = label_faces(quad, all_head);
    CHECK(uniform.mesh.face_labels == std::vector<std::uint8_t>{0, 0});

    // (arm, arm, hand) majority -> arm; all-distinct tie -> lowest value.
    const std::vector<std::uint8_t> mixed = {2, 2, 4, 7};
    const LabeledTemplateMesh m = label_faces(quad, mixed);
    CHECK(m.mesh.face_labels[0] == 2);  // faces {0,1,2}: arm,arm,hand
    CHECK(m.mesh.face_labels[1] == 2);  // faces {0,2,3}: arm,hand,leg -> lowest

    CHECK_THROWS_AS(label_faces(quad, {0, 1}), UnlabeledVertex);
    CHECK_THROWS_AS(label_faces(quad, {0, 1, 2, 99}), UnlabeledVertex);
}

TEST_CASE("label_faces: agrees with the generator's own face labels") {
    const SyntheticSubject& subject = small_subject();
    const LabeledTemplateMesh relabeled = label_faces(subject.template_mesh, subject.vertex_labels);
    std::map<int, int> got, want;
    for (auto l : relabeled.mesh.face_labels) ++got[l];
    for (auto l : subject.template_mesh.face_labels) ++want[l];
    CHECK(got == want);
    CHECK(relabeled.mesh.face_labels == subject.template_mesh.face_labels);
}

TEST_CASE("sample_semantic: label shares track area shares") {
    const SyntheticSubject& subject = small_subject();
    const LabeledTemplateMesh tpl = subject_template(subject);
    const SemanticPointSet set = sample_semantic(tpl, 20000, 9);
    set.validate();

    std::vector<double> label_area(kPartCount, 0.0), label_share(kPartCount, 0.0);
    double total_area = 0;
    for (std::size_t f = 0; f < tpl.mesh.face_count(); ++f) {
        label_area[tpl.mesh.face_labels[f]] += tpl.mesh.face_area(f);
        total_area += tpl.mesh.face_area(f);
    }
    for (std::size_t i = 0; i < set.size(); ++i) label_share[set.labels[i]] += 1.0;
    for (std::size_t l = 0; l < kPartCount; ++l) {
        const double want = label_area[l] / total_area;
        const double got = label_share[l] / static_cast<double>(set.size());
        CHECK(std::fabs(got - want) < 0.03);
    }
}

TEST_CASE("sample_semantic: deterministic and consistent with the cache") {
    const SyntheticSubject& subject = small_subject();
    const LabeledTemplateMesh tpl = subject_template(subject);
    const SemanticPointSet a = sample_semantic(tpl, 500, 4);
    const SemanticPointSet b = sample_semantic(tpl, 500, 4);
    CHECK(a.face_index == b.face_index);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.positions[i] == b.positions[i]);
        // Cached position equals direct barycentric evaluation.
        const auto& tri = tpl.mesh.faces[a.face_index[i]];
        const Vec3d v0(tpl.mesh.vertices[tri[0]]), v1(tpl.mesh.vertices[tri[1]]),
            v2(tpl.mesh.vertices[tri[2]]);
        const Vec3d want = v0 * a.barycentric[i].x + v1 * a.barycentric[i].y + v2 * a.barycentric[i].z;
        CHECK((Vec3d(a.positions[i]) - want).norm() < 1e-6);
        CHECK(a.normal_offset[i] == 0.0);
        CHECK(a.labels[i] == tpl.mesh.face_labels[a.face_index[i]]);
    }
}

TEST_CASE("align_to_template_scan: self-alignment converges and keeps labels") {
    const SyntheticSubject& subject = small_subject();
    const LabeledTemplateMesh tpl = subject_template(subject);
    SemanticPointSet set = sample_semantic(tpl, 8192, 11);
    const std::vector<std::uint8_t> labels_before = set.labels;
    const std::vector<std::uint32_t> faces_before = set.face_index;

    // Target: an equal-count sampling of the same surface. Sub-face point
    // density is what lets the scan -> points chamfer direction close.
    const OrientedPointCloud scan = sample_surface(tpl.mesh, 8192, 77);
    const AlignConfig config;  // defaults are the pipeline defaults
    const AlignStats stats = align_to_template_scan(set, tpl, scan, config);
    MESSAGE("align: start ", stats.chamfer_history.front(), " -> final ", stats.final_chamfer);

    CHECK(set.labels == labels_before);
    CHECK(set.face_index == faces_before);
    set.validate();
    CHECK(stats.final_chamfer < 1e-4);
    CHECK(stats.converged);

    // Best-so-far chamfer is monotone non-increasing and ends well below
    // the starting value.
    std::vector<double> best_so_far;
    double best = stats.chamfer_history.front();
    for (const double v : stats.chamfer_history) {
        best = std::min(best, v);
        best_so_far.push_back(best);
    }
    for (std::size_t i = 1; i < best_so_far.size(); ++i) CHECK(best_so_far[i] <= best_so_far[i - 1]);
    CHECK(best_so_far.back() < 0.5 * stats.chamfer_history.front());
}

TEST_CASE("repose_semantic: template pose reproduces aligned positions") {
    const SyntheticSubject& subject = small_subject();
    const LabeledTemplateMesh tpl = subject_template(subject);
    SemanticPointSet set = sample_semantic(tpl, 600, 5);

    Rng rng(6);
    NetSizes tiny;
    tiny.deltanet_depth = 3;
    tiny.deltanet_width = 8;
    tiny.deltanet_skip = 1;
    tiny.lbsnet_depth = 2;
    tiny.lbsnet_width = 8;
    tiny.encoder_width = 8;
    tiny.pose_code_dim = 4;
    tiny.pe_levels = 2;
    const DeformationModel model = DeformationModel::init(
        subject.skeleton, subject.template_pose, subject.params.expression_dim, tiny, rng);

    std::vector<std::uint8_t> labels;
    const OrientedPointCloud posed =
        repose_semantic(set, tpl.mesh, model, subject.template_pose, &labels);
    CHECK(labels == set.labels);
    REQUIRE(posed.size() == set.size());
    // Fresh model at the template pose: near-identity (delta ~ 1e-4).
    for (std::size_t i = 0; i < set.size(); ++i)
        CHECK((Vec3d(posed.positions[i]) - Vec3d(set.positions[i])).norm() < 5e-3);

    // Label multiset is preserved under an arbitrary pose.
    std::vector<std::uint8_t> labels2;
    const OrientedPointCloud posed2 = repose_semantic(set, tpl.mesh, model, subject.poses[1], &labels2);
    CHECK(labels2 == set.labels);
    CHECK(posed2.size() == set.size());
}

TEST_CASE("semantic ply: attachment round trip") {
    const SyntheticSubject& subject = small_subject();
    const LabeledTemplateMesh tpl = subject_template(subject);
    SemanticPointSet set = sample_semantic(tpl, 300, 8);
    set.feature_dim = 4;
    set.features.assign(set.size() * 4, 0.25);

    const auto dir = std::filesystem::temp_directory_path() / "spav_tests";
    std::filesystem::create_directories(dir);
    const auto path = dir / "semantic.ply";
    write_semantic_ply(set, path);
    const SemanticPointSet back = read_semantic_ply(path);
    REQUIRE(back.size() == set.size());
    CHECK(back.face_index == set.face_index);
    CHECK(back.labels == set.labels);
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(std::fabs(back.barycentric[i].x - set.barycentric[i].x) < 1e-6);
        CHECK(std::fabs(back.normal_offset[i] - set.normal_offset[i]) < 1e-6);
    }

    // Checkpoint round trip carries features too.
    Checkpoint ck;
    save_semantic(set, ck);
    const SemanticPointSet loaded = load_semantic(Checkpoint::deserialize(ck.serialize()));
    REQUIRE(loaded.has_features());
    CHECK(loaded.feature_dim == 4);
    CHECK(loaded.features[5] == 0.25);
    CHECK(loaded.labels == set.labels);
}

TEST_CASE("read_vertex_labels: format checks") {
    const auto dir = std::filesystem::temp_directory_path() / "spav_tests";
    std::filesystem::create_directories(dir);
    const auto path = dir / "labels.txt";
    {
        std::ofstream out(path);
        out << "0\n3\n7\n";
    }
    const auto labels = read_vertex_labels(path, 3);
    CHECK(labels == std::vector<std::uint8_t>{0, 3, 7});
    CHECK_THROWS_AS(read_vertex_labels(path, 4), ParseError);
    {
        std::ofstream out(path);
        out << "0\n9\n";
    }
    CHECK_THROWS_AS(read_vertex_labels(path, 2), ParseError);
}
