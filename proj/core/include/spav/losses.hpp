#pragma once

#include <cstdint>
#include <vector>

#include "spav/error.hpp"
#include "spav/vec.hpp"

namespace spav {

// Bijective point matching (EMD) or per-direction nearest neighbors.
struct MatchResult {
    std::vector<std::uint32_t> assignment;  // source i -> target assignment[i]
    double cost = 0;                        // mean non-squared distance under the assignment
};

// Per-term weights and ablation switches. Defaults follow the training
// recipe: chamfer 5000, emd 5000, normal 1, reg 100, color 10.
struct LossWeights {
    double chamfer = 5000.0;
    double emd = 5000.0;
    double normal = 1.0;
    double reg = 100.0;
    double color = 10.0;
    bool enable_chamfer = true;
    bool enable_emd = true;
    bool enable_normal = true;
    bool enable_reg = true;
    bool enable_color = true;

    void validate() const;
};

struct PointLoss {
    double value = 0;
    std::vector<Vec3d> grad;  // d value / d source point (or normal)
};

// Symmetric mean-of-squared-nearest-distances. Gradients flow to x_d only;
// the targets are data. KD-tree accelerated, identical arithmetic to the
// O(n^2) definition.
PointLoss chamfer(const std::vector<Vec3d>& x_d, const std::vector<Vec3d>& x_p);
double chamfer_value(const std::vector<Vec3d>& x_d, const std::vector<Vec3d>& x_p);

// epsilon-scaling auction parameters. The default profile terminates when
// the duality gap bound n*eps falls below half the 1% target, so auction
// cost stays within 1% of the exact optimum.
struct AuctionConfig {
    double start_eps_fraction = 0.25;  // eps0 = fraction * max pairwise cost
    double scale_factor = 5.0;         // eps divisor per phase
    double relative_gap = 0.005;       // stop when n*eps <= gap * cost
    int max_phases = 30;
    std::int64_t max_bids = -1;        // <0: unlimited; training uses a cap
};

// Minimum-mean-distance bijection between equal-size sets.
MatchResult emd_match(const std::vector<Vec3d>& x_d, const std::vector<Vec3d>& x_p,
                      const AuctionConfig& config = {});

// Mean distance under a frozen assignment, with gradients w.r.t. x_d.
PointLoss emd_loss(const MatchResult& match, const std::vector<Vec3d>& x_d,
                   const std::vector<Vec3d>& x_p);

// mean_i (1 - cos(n_d_i, n_p_phi(i))), the matched-normal consistency term.
// Normals are assumed unit; gradients w.r.t. n_d.
PointLoss normal_loss(const std::vector<Vec3d>& n_d, const MatchResult& match,
                      const std::vector<Vec3d>& n_p);

// Weight-field supervision at registered vertices plus offset shrinkage:
// mean_i ||w_i - w*_i||^2 + mean_j ||delta_j||^2. The offset term covers
// the positional offsets only; the per-point normal rotation is trained by
// the normal-consistency loss alone.
struct RegLoss {
    double value = 0;
    std::vector<double> grad_weights;  // [rows x bones], row-major
    std::vector<double> grad_offsets;  // [rows x 3]
};
RegLoss reg_loss(const std::vector<double>& weight_rows, const std::vector<double>& reference_rows,
                 std::size_t bone_count, const std::vector<double>& offset_rows);

// Sum of enabled weighted terms; disabled terms contribute exactly zero.
struct LossTerms {
    double chamfer = 0;
    double emd = 0;
    double normal = 0;
    double reg = 0;
    double color = 0;
};
double total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace spav
