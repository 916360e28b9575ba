#include "spav/losses.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "spav/kdtree.hpp"

namespace spav {

void LossWeights::validate() const {
    if (chamfer < 0 || emd < 0 || normal < 0 || reg < 0 || color < 0)
        throw Error("loss weights must be nonnegative");
}

PointLoss chamfer(const std::vector<Vec3d>& x_d, const std::vector<Vec3d>& x_p) {
    if (x_d.empty() || x_p.empty()) throw EmptyCloud("chamfer: empty input");
    PointLoss out;
    out.grad.assign(x_d.size(), Vec3d{0, 0, 0});

    const KdIndex target_index(x_p);
    const KdIndex source_index(x_d);
    const double inv_d = 1.0 / static_cast<double>(x_d.size());
    const double inv_p = 1.0 / static_cast<double>(x_p.size());

    // x_d -> x_p direction
    double sum_d = 0;
    for (std::size_t i = 0; i < x_d.size(); ++i) {
        const Neighbor nn = target_index.nearest(x_d[i]);
        const Vec3d diff = x_d[i] - x_p[nn.index];
        sum_d += diff.squared_norm();
        out.grad[i] += 2.0 * inv_d * diff;
    }
    // x_p -> x_d direction; gradient lands on the matched x_d
    double sum_p = 0;
    for (std::size_t j = 0; j < x_p.size(); ++j) {
        const Neighbor nn = source_index.nearest(x_p[j]);
        const Vec3d diff = x_d[nn.index] - x_p[j];
        sum_p += diff.squared_norm();
        out.grad[nn.index] += 2.0 * inv_p * diff;
    }
    out.value = sum_d * inv_d + sum_p * inv_p;
    return out;
}

double chamfer_value(const std::vector<Vec3d>& x_d, const std::vector<Vec3d>& x_p) {
    if (x_d.empty() || x_p.empty()) throw EmptyCloud("chamfer: empty input");
    const KdIndex target_index(x_p);
    const KdIndex source_index(x_d);
    double sum_d = 0, sum_p = 0;
    for (const auto& p : x_d) {
        const Neighbor nn = target_index.nearest(p);
        sum_d += (p - x_p[nn.index]).squared_norm();
    }
    for (const auto& q : x_p) {
        const Neighbor nn = source_index.nearest(q);
        sum_p += (x_d[nn.index] - q).squared_norm();
    }
    return sum_d / static_cast<double>(x_d.size()) + sum_p / static_cast<double>(x_p.size());
}

namespace {

double pair_distance(const std::vector<Vec3d>& a, const std::vector<Vec3d>& b, std::size_t i,
                     std::size_t j) {
    return (a[i] - b[j]).norm();
}

// One auction phase at fixed eps: forward auction, bidders processed FIFO.
// Returns false when the bid cap was hit before completion.
bool auction_phase(const std::vector<Vec3d>& x_d, const std::vector<Vec3d>& x_p, double eps,
                   std::vector<double>& price, std::vector<std::int32_t>& owner,
                   std::vector<std::int32_t>& assigned, std::int64_t& bids_left) {
    const std::size_t n = x_d.size();
    std::deque<std::uint32_t> queue;
    for (std::uint32_t i = 0; i < n; ++i) {
        assigned[i] = -1;
        queue.push_back(i);
    }
    std::fill(owner.begin(), owner.end(), -1);

    while (!queue.empty()) {
        if (bids_left == 0) return false;
        if (bids_left > 0) --bids_left;
        const std::uint32_t bidder = queue.front();
        queue.pop_front();

        // Best and second-best net value; lowest index wins ties.
        double best_value = -std::numeric_limits<double>::infinity();
        double second_value = -std::numeric_limits<double>::infinity();
        std::uint32_t best_j = 0;
        for (std::uint32_t j = 0; j < n; ++j) {
            const double v = -pair_distance(x_d, x_p, bidder, j) - price[j];
            if (v > best_value) {
                second_value = best_value;
                best_value = v;
                best_j = j;
            } else if (v > second_value) {
                second_value = v;
            }
        }
        if (second_value == -std::numeric_limits<double>::infinity()) second_value = best_value;

        price[best_j] += best_value - second_value + eps;
        const std::int32_t previous = owner[best_j];
        if (previous >= 0) {
            assigned[previous] = -1;
            queue.push_back(static_cast<std::uint32_t>(previous));
        }
        owner[best_j] = static_cast<std::int32_t>(bidder);
        assigned[bidder] = static_cast<std::int32_t>(best_j);
    }
    return true;
}

// Deterministic completion when the bid budget runs out: each unassigned
// bidder takes the cheapest free object.
void greedy_complete(const std::vector<Vec3d>& x_d, const std::vector<Vec3d>& x_p,
                     std::vector<std::int32_t>& owner, std::vector<std::int32_t>& assigned) {
    const std::size_t n = x_d.size();
    for (std::uint32_t i = 0; i < n; ++i) {
        if (assigned[i] >= 0) continue;
        double best = std::numeric_limits<double>::infinity();
        std::int32_t best_j = -1;
        for (std::uint32_t j = 0; j < n; ++j) {
            if (owner[j] >= 0) continue;
            const double d = pair_distance(x_d, x_p, i, j);
            if (d < best) {
                best = d;
                best_j = static_cast<std::int32_t>(j);
            }
        }
        assigned[i] = best_j;
        owner[best_j] = static_cast<std::int32_t>(i);
    }
}

}  // namespace

MatchResult emd_match(const std::vector<Vec3d>& x_d, const std::vector<Vec3d>& x_p,
                      const AuctionConfig& config) {
    if (x_d.size() != x_p.size())
        throw SizeMismatch("emd_match: set sizes differ (" + std::to_string(x_d.size()) + " vs " +
                           std::to_string(x_p.size()) + ")");
    const std::size_t n = x_d.size();
    MatchResult result;
    if (n == 0) return result;

    // Cheap overestimate of the cost scale from a couple of diagonals.
    double max_cost = 0;
    for (std::size_t i = 0; i < n; ++i) {
        max_cost = std::max(max_cost, pair_distance(x_d, x_p, i, i));
        max_cost = std::max(max_cost, pair_distance(x_d, x_p, i, (i * 7 + 3) % n));
    }
    if (max_cost == 0) {
        // Identical sets in identical order.
        result.assignment.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) result.assignment[i] = i;
        result.cost = 0;
        return result;
    }

    std::vector<double> price(n, 0.0);
    std::vector<std::int32_t> owner(n, -1), assigned(n, -1);
    std::int64_t bids_left = config.max_bids;
    double eps = config.start_eps_fraction * max_cost;

    for (int phase = 0; phase < config.max_phases; ++phase) {
        const bool complete = auction_phase(x_d, x_p, eps, price, owner, assigned, bids_left);
        if (!complete) {
            greedy_complete(x_d, x_p, owner, assigned);
            break;
        }
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) total += pair_distance(x_d, x_p, i, assigned[i]);
        // Auction bound: total <= optimal + n*eps. Stop once the bound
        // meets the relative target (or the match is already exact).
        const double gap_bound = static_cast<double>(n) * eps;
        if (gap_bound <= config.relative_gap * std::max(total - gap_bound, 0.0) + 1e-12 * max_cost)
            break;
        eps /= config.scale_factor;
    }

    result.assignment.resize(n);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        result.assignment[i] = static_cast<std::uint32_t>(assigned[i]);
        total += pair_distance(x_d, x_p, i, result.assignment[i]);
    }
    result.cost = total / static_cast<double>(n);
    return result;
}

PointLoss emd_loss(const MatchResult& match, const std::vector<Vec3d>& x_d,
                   const std::vector<Vec3d>& x_p) {
    if (match.assignment.size() != x_d.size())
        throw SizeMismatch("emd_loss: assignment length mismatch");
    PointLoss out;
    out.grad.assign(x_d.size(), Vec3d{0, 0, 0});
    const double inv = 1.0 / static_cast<double>(x_d.size());
    double total = 0;
    for (std::size_t i = 0; i < x_d.size(); ++i) {
        const Vec3d diff = x_d[i] - x_p[match.assignment[i]];
        const double d = diff.norm();
        total += d;
        if (d > 1e-18) out.grad[i] = inv / d * diff;
    }
    out.value = total * inv;
    return out;
}

PointLoss normal_loss(const std::vector<Vec3d>& n_d, const MatchResult& match,
                      const std::vector<Vec3d>& n_p) {
    if (match.assignment.size() != n_d.size())
        throw SizeMismatch("normal_loss: assignment length mismatch");
    PointLoss out;
    out.grad.assign(n_d.size(), Vec3d{0, 0, 0});
    const double inv = 1.0 / static_cast<double>(n_d.size());
    double total = 0;
    for (std::size_t i = 0; i < n_d.size(); ++i) {
        const Vec3d& target = n_p[match.assignment[i]];
        total += 1.0 - n_d[i].dot(target);
        out.grad[i] = -inv * target;
    }
    out.value = total * inv;
    return out;
}

RegLoss reg_loss(const std::vector<double>& weight_rows, const std::vector<double>& reference_rows,
                 std::size_t bone_count, const std::vector<double>& offset_rows) {
    if (weight_rows.size() != reference_rows.size())
        throw MissingRegistration("reg_loss: reference weights missing or mismatched");
    if (bone_count == 0 || weight_rows.size() % bone_count != 0)
        throw DimensionMismatch("reg_loss: weight rows not divisible by bone count");
    RegLoss out;
    out.grad_weights.assign(weight_rows.size(), 0.0);
    out.grad_offsets.assign(offset_rows.size(), 0.0);

    const std::size_t rows = weight_rows.size() / bone_count;
    double weight_term = 0;
    if (rows > 0) {
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t i = 0; i < weight_rows.size(); ++i) {
            const double d = weight_rows[i] - reference_rows[i];
            weight_term += d * d;
            out.grad_weights[i] = 2.0 * inv * d;
        }
        weight_term *= inv;
    }

    double offset_term = 0;
    if (!offset_rows.empty()) {
        if (offset_rows.size() % 3 != 0)
            throw DimensionMismatch("reg_loss: offset rows must have 3 columns");
        const std::size_t m = offset_rows.size() / 3;
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < offset_rows.size(); ++i) {
            offset_term += offset_rows[i] * offset_rows[i];
            out.grad_offsets[i] = 2.0 * inv * offset_rows[i];
        }
        offset_term *= inv;
    }

    out.value = weight_term + offset_term;
    return out;
}

double total_loss(const LossTerms& terms, const LossWeights& weights) {
    weights.validate();
    double total = 0;
    if (weights.enable_chamfer) total += weights.chamfer * terms.chamfer;
    if (weights.enable_emd) total += weights.emd * terms.emd;
    if (weights.enable_normal) total += weights.normal * terms.normal;
    if (weights.enable_reg) total += weights.reg * terms.reg;
    if (weights.enable_color) total += weights.color * terms.color;
    return total;
}

}  // namespace spav
