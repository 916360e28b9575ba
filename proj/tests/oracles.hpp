// Test-only reference implementations, kept independent of the library
// code paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "spav/autodiff.hpp"
#include "spav/vec.hpp"

namespace oracle {

// Exhaustive k-NN by (distance, index) sort.
inline std::vector<std::pair<std::uint32_t, double>> brute_knn(const std::vector<spav::Vec3f>& pts,
                                                               const spav::Vec3d& q, std::size_t k) {
    std::vector<std::pair<double, std::uint32_t>> all;
    all.reserve(pts.size());
    for (std::uint32_t i = 0; i < pts.size(); ++i) {
        const spav::Vec3d d = spav::Vec3d(pts[i]) - q;
        all.push_back({d.squared_norm(), i});
    }
    std::sort(all.begin(), all.end());
    std::vector<std::pair<std::uint32_t, double>> out;
    for (std::size_t i = 0; i < k && i < all.size(); ++i)
        out.push_back({all[i].second, std::sqrt(all[i].first)});
    return out;
}

// O(n^2) Chamfer, same arithmetic (mean of squared nearest distances, both
// directions) with summation in index order.
inline double brute_chamfer(const std::vector<spav::Vec3d>& a, const std::vector<spav::Vec3d>& b) {
    auto dir = [](const std::vector<spav::Vec3d>& from, const std::vector<spav::Vec3d>& to) {
        double sum = 0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::max();
            for (const auto& q : to) best = std::min(best, (p - q).squared_norm());
            sum += best;
        }
        return sum / static_cast<double>(from.size());
    };
    return dir(a, b) + dir(b, a);
}

// Exact assignment cost by shortest augmenting paths (Jonker-Volgenant
// style), O(n^3). Minimizes sum of costs; returns the optimal total.
inline double hungarian_cost(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0;
    for (int j = 1; j <= n; ++j) total += cost[match[j] - 1][j - 1];
    return total;
}

// Central finite differences of a scalar function with respect to a tensor.
inline std::vector<double> fd_grad(spav::Tensor& param, const std::function<double()>& f,
                                   double h = 1e-5) {
    std::vector<double> g(param.values.size());
    for (std::size_t i = 0; i < param.values.size(); ++i) {
        const double saved = param.values[i];
        param.values[i] = saved + h;
        const double fp = f();
        param.values[i] = saved - h;
        const double fm = f();
        param.values[i] = saved;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// ||a - b||_2 / max(||b||_2, floor)
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b,
                        double floor = 1e-12) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

}  // namespace oracle
