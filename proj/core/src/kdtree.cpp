#include "spav/kdtree.hpp"

#include <algorithm>
#include <cmath>

namespace spav {

namespace {
constexpr std::uint32_t kLeafSize = 16;
}

KdIndex::KdIndex(std::span<const Vec3f> points) {
    points_.reserve(points.size());
    for (const auto& p : points) points_.push_back(Vec3d(p));
    order_.resize(points_.size());
    for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        nodes_.emplace_back();
        build(0, 0, static_cast<std::uint32_t>(points_.size()));
    }
}

KdIndex::KdIndex(const std::vector<Vec3d>& points) {
    points_ = points;
    order_.resize(points_.size());
    for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        nodes_.emplace_back();
        build(0, 0, static_cast<std::uint32_t>(points_.size()));
    }
}

void KdIndex::build(std::uint32_t node, std::uint32_t begin, std::uint32_t end) {
    Node& n = nodes_[node];
    n.begin = begin;
    n.end = end;
    if (end - begin <= kLeafSize) {
        n.axis = -1;
        return;
    }
    // Split on the widest axis at the median.
    Aabb box;
    for (std::uint32_t i = begin; i < end; ++i) box.expand(points_[order_[i]]);
    const Vec3d ext = box.extent();
    int axis = 0;
    if (ext.y > ext.x) axis = 1;
    if (ext.z > ext[axis]) axis = 2;

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double ca = points_[a][axis], cb = points_[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });
    const double split = points_[order_[mid]][axis];

    const std::uint32_t left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    // nodes_ may reallocate; re-reference.
    nodes_[node].axis = axis;
    nodes_[node].split = static_cast<float>(split);
    nodes_[node].left = left;
    nodes_[node].right = left + 1;
    build(left, begin, mid);
    build(left + 1, mid, end);
}

namespace {

// Bounded max-heap of (distance^2, index) keeping the k smallest under
// lexicographic (d2, index) order.
struct KnnVisitor {
    std::size_t k;
    std::vector<std::pair<double, std::uint32_t>> heap;

    bool less(const std::pair<double, std::uint32_t>& a,
              const std::pair<double, std::uint32_t>& b) const {
        return a.first < b.first || (a.first == b.first && a.second < b.second);
    }
    double worst() const { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().first; }
    void offer(double d2, std::uint32_t idx) {
        std::pair<double, std::uint32_t> cand{d2, idx};
        auto cmp = [this](const auto& a, const auto& b) { return less(a, b); };
        if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end(), cmp);
        } else if (less(cand, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), cmp);
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), cmp);
        }
    }
};

}  // namespace

template <typename Visitor>
void KdIndex::search(const Vec3d& query, Visitor& visitor) const {
    // Iterative depth-first with a manual stack; nearer child first.
    struct Entry { std::uint32_t node; double d2; };
    Entry stack[64];
    int top = 0;
    stack[top++] = {0, 0.0};
    while (top > 0) {
        const Entry e = stack[--top];
        if (e.d2 > visitor.worst()) continue;
        const Node& n = nodes_[e.node];
        if (n.axis < 0) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::uint32_t idx = order_[i];
                const Vec3d d = points_[idx] - query;
                visitor.offer(d.squared_norm(), idx);
            }
            continue;
        }
        const double delta = query[n.axis] - static_cast<double>(n.split);
        const std::uint32_t near = delta <= 0 ? n.left : n.right;
        const std::uint32_t far = delta <= 0 ? n.right : n.left;
        stack[top++] = {far, delta * delta};
        stack[top++] = {near, 0.0};
    }
}

std::vector<Neighbor> KdIndex::knn(const Vec3d& query, std::size_t k) const {
    if (k > points_.size())
        throw KTooLarge("knn: k=" + std::to_string(k) + " exceeds indexed size " +
                        std::to_string(points_.size()));
    KnnVisitor visitor{k, {}};
    visitor.heap.reserve(k);
    search(query, visitor);
    std::sort(visitor.heap.begin(), visitor.heap.end());
    std::vector<Neighbor> out;
    out.reserve(visitor.heap.size());
    for (const auto& [d2, idx] : visitor.heap) out.push_back({idx, std::sqrt(d2)});
    return out;
}

Neighbor KdIndex::nearest(const Vec3d& query) const {
    if (points_.empty()) throw KTooLarge("nearest: empty index");
    struct BestVisitor {
        double best_d2 = std::numeric_limits<double>::infinity();
        std::uint32_t best = 0;
        double worst() const { return best_d2; }
        void offer(double d2, std::uint32_t idx) {
            if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                best_d2 = d2;
                best = idx;
            }
        }
    } visitor;
    search(query, visitor);
    return {visitor.best, std::sqrt(visitor.best_d2)};
}

}  // namespace spav
