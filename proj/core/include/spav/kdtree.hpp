#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "spav/pointcloud.hpp"

namespace spav {

struct Neighbor {
    std::uint32_t index;  // into the indexed point set
    double distance;      // Euclidean
};

// Static KD-tree over a fixed point set. Build is single-threaded; queries
// are const and safe to call concurrently. Ties are broken by lower index,
// making results identical to a (distance, index) brute-force sort.
class KdIndex {
  public:
    KdIndex() = default;
    explicit KdIndex(std::span<const Vec3f> points);
    explicit KdIndex(const std::vector<Vec3d>& points);

    std::size_t size() const { return points_.size(); }

    // The k nearest indexed points, sorted by (distance, index). Throws
    // KTooLarge when k exceeds the indexed set size.
    std::vector<Neighbor> knn(const Vec3d& query, std::size_t k) const;

    Neighbor nearest(const Vec3d& query) const;

    const Vec3d& point(std::size_t i) const { return points_[i]; }

  private:
    struct Node {
        float split = 0;
        std::int32_t axis = -1;  // -1 marks a leaf
        std::uint32_t left = 0, right = 0;
        std::uint32_t begin = 0, end = 0;
    };

    void build(std::uint32_t node, std::uint32_t begin, std::uint32_t end);

    template <typename Visitor>
    void search(const Vec3d& query, Visitor& visitor) const;

    std::vector<Vec3d> points_;       // original order
    std::vector<std::uint32_t> order_;  // leaf buckets index into this
    std::vector<Node> nodes_;
};

}  // namespace spav
