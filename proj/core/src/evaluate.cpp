#include "spav/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "spav/mesh_query.hpp"
#include "spav/sampling.hpp"
#include "spav/synthetic.hpp"

namespace spav {

namespace {

bool is_hand(std::uint8_t label) {
    return label == static_cast<std::uint8_t>(PartLabel::LeftHand) ||
           label == static_cast<std::uint8_t>(PartLabel::RightHand);
}

struct DirectionStats {
    double sum = 0, max = 0, nc_sum = 0;
    std::size_t count = 0;
    double hand_sum = 0, hand_max = 0, hand_nc_sum = 0;
    std::size_t hand_count = 0;

    void add(double dist, double cos, bool hand) {
        sum += dist;
        max = std::max(max, dist);
        nc_sum += cos;
        ++count;
        if (hand) {
            hand_sum += dist;
            hand_max = std::max(hand_max, dist);
            hand_nc_sum += cos;
            ++hand_count;
        }
    }
};

// Samples `source`, measures distance/normal agreement against `target`.
// A sample counts as hand when the involved ground-truth face is labeled
// hand: the sample's own face (gt source) or the nearest face (gt target).
DirectionStats measure(const TriangleMesh& source, const MeshQuery& target_query,
                       const TriangleMesh& target, bool labels_on_source, std::size_t samples,
                       std::uint64_t seed) {
    DirectionStats stats;
    std::vector<std::uint32_t> faces;
    const OrientedPointCloud cloud = sample_surface(source, samples, seed, faces);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const MeshQuery::Hit hit = target_query.nearest(Vec3d(cloud.positions[i]));
        const Vec3d target_normal = target.face_normal(hit.face);
        const double cosine = Vec3d(cloud.normals[i]).dot(target_normal);
        bool hand = false;
        if (labels_on_source && source.has_face_labels()) hand = is_hand(source.face_labels[faces[i]]);
        if (!labels_on_source && target.has_face_labels()) hand = is_hand(target.face_labels[hit.face]);
        stats.add(hit.distance, cosine, hand);
    }
    return stats;
}

}  // namespace

void EvalReport::validate() const {
    if (cd_max + 1e-12 < cd) throw Error("eval report: cd_max below cd");
    if (nc < -1.0 - 1e-9 || nc > 1.0 + 1e-9) throw Error("eval report: nc outside [-1,1]");
    if (iou && (*iou < 0 || *iou > 1)) throw Error("eval report: iou outside [0,1]");
}

EvalReport evaluate(const TriangleMesh& predicted, const TriangleMesh& ground_truth,
                    const EvalConfig& config) {
    predicted.validate();
    ground_truth.validate();

    const MeshQuery pred_query(predicted);
    const MeshQuery gt_query(ground_truth);

    // pred -> gt: hand membership from the nearest gt face.
    const DirectionStats forward =
        measure(predicted, gt_query, ground_truth, /*labels_on_source=*/false, config.samples, config.seed);
    // gt -> pred: hand membership from the sampled gt face.
    const DirectionStats backward =
        measure(ground_truth, pred_query, predicted, /*labels_on_source=*/true, config.samples,
                config.seed ^ 0x9e3779b97f4a7c15ull);

    EvalReport report;
    const double total = static_cast<double>(forward.count + backward.count);
    report.cd = 1000.0 * (forward.sum + backward.sum) / total;
    report.cd_max = 1000.0 * std::max(forward.max, backward.max);
    report.nc = (forward.nc_sum + backward.nc_sum) / total;

    if (ground_truth.has_face_labels() && (forward.hand_count + backward.hand_count) > 0) {
        const double hand_total = static_cast<double>(forward.hand_count + backward.hand_count);
        report.cd_hands = 1000.0 * (forward.hand_sum + backward.hand_sum) / hand_total;
        report.cd_max_hands = 1000.0 * std::max(forward.hand_max, backward.hand_max);
        report.nc_hands = (forward.hand_nc_sum + backward.hand_nc_sum) / hand_total;
    }

    // Volumetric IoU over the union box; open meshes report no IoU.
    if (predicted.is_watertight() && ground_truth.is_watertight()) {
        Aabb box = predicted.bounds();
        box.expand(ground_truth.bounds());
        const GridLayout layout = GridLayout::fit(box, config.iou_resolution, 1.05);
        const auto a = voxelize_interior(predicted, layout);
        const auto b = voxelize_interior(ground_truth, layout);
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            inter += a[i] & b[i];
            uni += a[i] | b[i];
        }
        if (uni > 0) report.iou = static_cast<double>(inter) / static_cast<double>(uni);
    }

    report.validate();
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::json j{{"cd_mm", cd}, {"cd_max_mm", cd_max}, {"nc", nc}};
    if (iou) j["iou"] = *iou;
    if (cd_hands) {
        j["cd_hands_mm"] = *cd_hands;
        j["cd_max_hands_mm"] = *cd_max_hands;
        j["nc_hands"] = *nc_hands;
    }
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    EvalReport r;
    r.cd = j.at("cd_mm").get<double>();
    r.cd_max = j.at("cd_max_mm").get<double>();
    r.nc = j.at("nc").get<double>();
    if (j.contains("iou")) r.iou = j.at("iou").get<double>();
    if (j.contains("cd_hands_mm")) {
        r.cd_hands = j.at("cd_hands_mm").get<double>();
        r.cd_max_hands = j.at("cd_max_hands_mm").get<double>();
        r.nc_hands = j.at("nc_hands").get<double>();
    }
    return r;
}

}  // namespace spav
