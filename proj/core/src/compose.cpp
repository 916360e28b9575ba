#include "spav/compose.hpp"

#include <algorithm>

#include "spav/kdtree.hpp"

namespace spav {

SemanticPointSet compose(const Avatar& host, const Avatar& donor, const std::set<PartLabel>& parts,
                         ComposeMode mode, std::size_t idw_k) {
    host.points.validate();
    donor.points.validate();

    SemanticPointSet result = host.points;
    result.refresh_cache(host.template_mesh);
    if (parts.empty()) return result;

    // Donor points per requested label.
    std::vector<std::vector<std::uint32_t>> donor_by_label(kPartCount);
    for (std::size_t i = 0; i < donor.points.size(); ++i)
        donor_by_label[donor.points.labels[i]].push_back(static_cast<std::uint32_t>(i));
    for (const PartLabel part : parts)
        if (donor_by_label[static_cast<std::size_t>(part)].empty())
            throw EmptyPart(std::string("compose: donor has no points labeled ") + part_name(part));

    auto in_parts = [&](std::uint8_t label) {
        return parts.count(static_cast<PartLabel>(label)) > 0;
    };

    if (mode == ComposeMode::Texture) {
        if (!donor.points.has_features()) throw Error("compose: donor has no features");
        if (!result.has_features()) throw Error("compose: host has no features");
        if (donor.points.feature_dim != result.feature_dim)
            throw DimensionMismatch("compose: feature dims differ");
        SemanticPointSet donor_points = donor.points;
        donor_points.refresh_cache(donor.template_mesh);

        if (result.feature_source.size() != result.size()) result.feature_source.assign(result.size(), 0);

        // Per label: IDW over the donor's template-space points.
        for (const PartLabel part : parts) {
            const auto& ids = donor_by_label[static_cast<std::size_t>(part)];
            std::vector<Vec3f> donor_pos(ids.size());
            for (std::size_t j = 0; j < ids.size(); ++j) donor_pos[j] = donor_points.positions[ids[j]];
            const KdIndex index{std::span<const Vec3f>(donor_pos)};
            const std::size_t k = std::min(idw_k, ids.size());
            for (std::size_t i = 0; i < result.size(); ++i) {
                if (result.labels[i] != static_cast<std::uint8_t>(part)) continue;
                result.feature_source[i] = 1;  // decode with the donor's decoder
                const auto neighbors = index.knn(Vec3d(result.positions[i]), k);
                double wsum = 0;
                std::vector<double> agg(result.feature_dim, 0.0);
                const bool exact = neighbors[0].distance < 1e-12;
                for (std::size_t j = 0; j < neighbors.size(); ++j) {
                    const double w = exact ? (j == 0 ? 1.0 : 0.0) : 1.0 / (neighbors[j].distance + 1e-8);
                    wsum += w;
                    const double* f =
                        donor_points.features.data() + ids[neighbors[j].index] * donor_points.feature_dim;
                    for (std::size_t d = 0; d < result.feature_dim; ++d) agg[d] += w * f[d];
                }
                for (std::size_t d = 0; d < result.feature_dim; ++d)
                    result.features[i * result.feature_dim + d] = agg[d] / wsum;
            }
        }
        return result;
    }

    // Points mode: host points outside `parts`, donor points inside.
    SemanticPointSet out;
    out.feature_dim = result.feature_dim;
    const bool carry_features = result.has_features() && donor.points.has_features() &&
                                donor.points.feature_dim == result.feature_dim;
    auto push = [&](const SemanticPointSet& src, std::size_t i, std::uint8_t source_id) {
        out.face_index.push_back(src.face_index[i]);
        out.barycentric.push_back(src.barycentric[i]);
        out.normal_offset.push_back(src.normal_offset[i]);
        out.labels.push_back(src.labels[i]);
        out.source.push_back(source_id);
        out.feature_source.push_back(source_id);
        if (carry_features)
            for (std::size_t d = 0; d < out.feature_dim; ++d)
                out.features.push_back(src.features[i * src.feature_dim + d]);
    };
    for (std::size_t i = 0; i < result.size(); ++i)
        if (!in_parts(result.labels[i])) push(result, i, 0);
    for (std::size_t i = 0; i < donor.points.size(); ++i)
        if (in_parts(donor.points.labels[i])) push(donor.points, i, 1);

    const TriangleMesh* templates[2] = {&host.template_mesh, &donor.template_mesh};
    out.refresh_cache(std::span<const TriangleMesh* const>(templates, 2));
    out.validate();
    return out;
}

}  // namespace spav
