#pragma once

#include <set>

#include "spav/pipeline.hpp"

namespace spav {

enum class ComposeMode { Texture, Points };

// Avatar composition by part labels. Texture mode keeps the host geometry
// and replaces the features of host points in `parts` with IDW-aggregated
// donor features (matched per label in template space). Points mode swaps
// the host points of those labels for the donor's, which keep their own
// template/model routing (source id 1).
SemanticPointSet compose(const Avatar& host, const Avatar& donor, const std::set<PartLabel>& parts,
                         ComposeMode mode, std::size_t idw_k = 8);

}  // namespace spav
