#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "spav/losses.hpp"
#include "spav/rng.hpp"

using namespace spav;

namespace {

std::vector<Vec3d> random_points(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<Vec3d> pts(n);
    for (auto& p : pts) p = {scale * rng.uniform(), scale * rng.uniform(), scale * rng.uniform()};
    return pts;
}

std::vector<Vec3d> random_normals(std::size_t n, Rng& rng) {
    std::vector<Vec3d> out(n);
    for (auto& v : out) v = Vec3d{rng.normal(), rng.normal(), rng.normal()}.normalized();
    return out;
}

bool is_permutation(const std::vector<std::uint32_t>& a) {
    std::vector<std::uint32_t> seen(a.size(), 0);
    for (auto v : a) {
        if (v >= a.size() || seen[v]) return false;
        seen[v] = 1;
    }
    return true;
}

}  // namespace

TEST_CASE("chamfer: identical clouds give zero") {
    Rng rng(1);
    const auto pts = random_points(50, rng);
    const PointLoss l = chamfer(pts, pts);
    CHECK(l.value == 0.0);
    for (const auto& g : l.grad) CHECK(g.norm() == 0.0);
}

TEST_CASE("chamfer: closed-form singleton pair") {
    const std::vector<Vec3d> a = {{0, 0, 0}};
    const std::vector<Vec3d> b = {{1, 0, 0}};
    const PointLoss l = chamfer(a, b);
    CHECK(l.value == doctest::Approx(2.0).epsilon(1e-15));
    // Both directions pull the single source toward the target.
    CHECK(l.grad[0].x == doctest::Approx(-4.0).epsilon(1e-15));
}

TEST_CASE("chamfer: equals brute force at n=128") {
    Rng rng(2);
    const auto a = random_points(128, rng);
    const auto b = random_points(128, rng);
    const PointLoss l = chamfer(a, b);
    const double want = oracle::brute_chamfer(a, b);
    CHECK(std::fabs(l.value - want) < 1e-12);
    CHECK(l.value > 0.0);
    CHECK_THROWS_AS(chamfer({}, b), EmptyCloud);
}

TEST_CASE("chamfer: scales quadratically") {
    Rng rng(3);
    auto a = random_points(64, rng);
    auto b = random_points(64, rng);
    const double base = chamfer_value(a, b);
    for (auto& p : a) p = p * 3.0;
    for (auto& p : b) p = p * 3.0;
    const double scaled = chamfer_value(a, b);
    CHECK(scaled == doctest::Approx(9.0 * base).epsilon(1e-10));
}

TEST_CASE("chamfer: gradient matches finite differences") {
    Rng rng(4);
    auto a = random_points(24, rng);
    const auto b = random_points(24, rng);
    const PointLoss l = chamfer(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (int axis = 0; axis < 3; ++axis) {
            const double h = 1e-6;
            const double saved = a[i][axis];
            a[i][axis] = saved + h;
            const double fp = chamfer_value(a, b);
            a[i][axis] = saved - h;
            const double fm = chamfer_value(a, b);
            a[i][axis] = saved;
            const double fd = (fp - fm) / (2 * h);
            CHECK(l.grad[i][axis] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("emd_match: identity and singleton cases") {
    Rng rng(5);
    const auto pts = random_points(32, rng);
    const MatchResult self = emd_match(pts, pts);
    CHECK(self.cost == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(is_permutation(self.assignment));

    const std::vector<Vec3d> a = {{0, 0, 0}};
    const std::vector<Vec3d> b = {{1, 0, 0}};
    const MatchResult m = emd_match(a, b);
    CHECK(m.cost == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(emd_match(a, pts), SizeMismatch);
}

TEST_CASE("emd_match: within 1% of the exact Hungarian optimum (n=64)") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_points(64, rng);
        const auto b = random_points(64, rng);
        const MatchResult m = emd_match(a, b);
        REQUIRE(is_permutation(m.assignment));

        std::vector<std::vector<double>> cost(64, std::vector<double>(64));
        for (int i = 0; i < 64; ++i)
            for (int j = 0; j < 64; ++j) cost[i][j] = (a[i] - b[j]).norm();
        const double optimal = oracle::hungarian_cost(cost) / 64.0;
        CHECK(m.cost <= 1.01 * optimal + 1e-12);
        CHECK(m.cost >= optimal - 1e-9);
    }
}

TEST_CASE("emd_match: scales linearly") {
    Rng rng(7);
    auto a = random_points(48, rng);
    auto b = random_points(48, rng);
    const double base = emd_match(a, b).cost;
    for (auto& p : a) p = p * 2.5;
    for (auto& p : b) p = p * 2.5;
    const double scaled = emd_match(a, b).cost;
    CHECK(scaled == doctest::Approx(2.5 * base).epsilon(1e-6));
}

TEST_CASE("emd_loss: gradients under a frozen matching") {
    const std::vector<Vec3d> a = {{0, 0, 0}};
    const std::vector<Vec3d> b = {{1, 0, 0}};
    const MatchResult m = emd_match(a, b);
    const PointLoss l = emd_loss(m, a, b);
    CHECK(l.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.grad[0].x == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(l.grad[0].y == 0.0);

    const PointLoss zero = emd_loss(m, b, b);  // cost-0 matching
    CHECK(zero.value == 0.0);
    CHECK(zero.grad[0].norm() == 0.0);
}

TEST_CASE("emd_loss: finite differences at n=16") {
    Rng rng(8);
    auto a = random_points(16, rng);
    const auto b = random_points(16, rng);
    const MatchResult m = emd_match(a, b);
    const PointLoss l = emd_loss(m, a, b);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (int axis = 0; axis < 3; ++axis) {
            const double h = 1e-7;
            const double saved = a[i][axis];
            a[i][axis] = saved + h;
            const double fp = emd_loss(m, a, b).value;
            a[i][axis] = saved - h;
            const double fm = emd_loss(m, a, b).value;
            a[i][axis] = saved;
            CHECK(l.grad[i][axis] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("normal_loss: aligned, opposite, and random pairs") {
    MatchResult identity;
    identity.assignment = {0, 1, 2};
    const std::vector<Vec3d> n1 = {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
    CHECK(normal_loss(n1, identity, n1).value == 0.0);

    std::vector<Vec3d> flipped = n1;
    for (auto& v : flipped) v = -v;
    CHECK(normal_loss(n1, identity, flipped).value == doctest::Approx(2.0).epsilon(1e-15));

    Rng rng(9);
    const auto nd = random_normals(32, rng);
    const auto np = random_normals(32, rng);
    MatchResult m;
    m.assignment.resize(32);
    for (std::uint32_t i = 0; i < 32; ++i) m.assignment[i] = (i * 5) % 32;
    const PointLoss l = normal_loss(nd, m, np);
    double direct = 0;
    for (std::size_t i = 0; i < 32; ++i) direct += 1.0 - nd[i].dot(np[m.assignment[i]]);
    CHECK(l.value == doctest::Approx(direct / 32.0).epsilon(1e-12));
}

TEST_CASE("reg_loss: closed forms") {
    // weights exact, zero offsets -> 0
    const std::vector<double> w = {0.2, 0.8, 1.0, 0.0};
    const std::vector<double> d0(2 * 3, 0.0);
    CHECK(reg_loss(w, w, 2, d0).value == 0.0);

    // uniform delta (0.1,0,0) -> mean offset norm^2 = 0.01
    std::vector<double> d(4 * 3, 0.0);
    for (int i = 0; i < 4; ++i) d[i * 3] = 0.1;
    const RegLoss rl = reg_loss(w, w, 2, d);
    CHECK(rl.value == doctest::Approx(0.01).epsilon(1e-15));

    std::vector<double> wrong = {0.1, 0.9};
    CHECK_THROWS_AS(reg_loss(w, wrong, 2, d), MissingRegistration);
}

TEST_CASE("reg_loss: finite differences") {
    Rng rng(10);
    std::vector<double> w(3 * 4), wstar(3 * 4), d(5 * 3);
    for (auto& v : w) v = rng.uniform();
    for (auto& v : wstar) v = rng.uniform();
    for (auto& v : d) v = rng.uniform(-0.2, 0.2);
    const RegLoss l = reg_loss(w, wstar, 4, d);
    const double h = 1e-6;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double saved = w[i];
        w[i] = saved + h;
        const double fp = reg_loss(w, wstar, 4, d).value;
        w[i] = saved - h;
        const double fm = reg_loss(w, wstar, 4, d).value;
        w[i] = saved;
        CHECK(l.grad_weights[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double saved = d[i];
        d[i] = saved + h;
        const double fp = reg_loss(w, wstar, 4, d).value;
        d[i] = saved - h;
        const double fm = reg_loss(w, wstar, 4, d).value;
        d[i] = saved;
        CHECK(l.grad_offsets[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("total_loss: weighting and ablation flags") {
    LossTerms terms;
    CHECK(total_loss(terms, LossWeights{}) == 0.0);

    terms.chamfer = 2.0;
    LossWeights w;
    w.enable_emd = w.enable_normal = w.enable_reg = w.enable_color = false;
    CHECK(total_loss(terms, w) == doctest::Approx(10000.0).epsilon(1e-15));

    // Hand-summed default weighting.
    terms.emd = 0.5;
    terms.normal = 0.25;
    terms.reg = 0.125;
    terms.color = 1.5;
    LossWeights full;
    const double want = 5000.0 * 2.0 + 5000.0 * 0.5 + 1.0 * 0.25 + 100.0 * 0.125 + 10.0 * 1.5;
    CHECK(total_loss(terms, full) == doctest::Approx(want).epsilon(1e-15));

    // Disabled terms contribute exactly zero.
    LossWeights off = full;
    off.enable_chamfer = false;
    CHECK(total_loss(terms, off) == doctest::Approx(want - 10000.0).epsilon(1e-15));

    LossWeights bad;
    bad.chamfer = -1;
    CHECK_THROWS_AS(total_loss(terms, bad), Error);
}
