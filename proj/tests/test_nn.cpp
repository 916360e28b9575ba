#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "spav/checkpoint.hpp"
#include "spav/nn.hpp"
#include "spav/rng.hpp"

using namespace spav;

namespace {

Tensor random_tensor(std::int64_t r, std::int64_t c, Rng& rng, double lo = -1, double hi = 1) {
    Tensor t({r, c});
    for (auto& v : t.values) v = rng.uniform(lo, hi);
    return t;
}

// Gradient check harness: builds the graph twice, once for the analytic
// gradient and once per finite-difference probe.
void check_gradient(Tensor& param,
                    const std::function<Tape::NodeId(Tape&, Tape::NodeId)>& graph,
                    double tol = 1e-6) {
    auto scalar = [&]() {
        Tape tape;
        const auto leaf = tape.leaf(param);
        return tape.value(graph(tape, leaf)).values[0];
    };
    Tape tape;
    const auto leaf = tape.leaf(param);
    const auto loss = graph(tape, leaf);
    param.zero_grad();
    tape.backward_scalar(loss);
    const auto fd = oracle::fd_grad(param, scalar);
    CHECK(oracle::rel_error(param.grad, fd) < tol);
}

}  // namespace

TEST_CASE("positional encoding: closed forms") {
    const double zero[3] = {0, 0, 0};
    const auto pe0 = positional_encoding({zero, 3}, 4);
    REQUIRE(pe0.size() == 27);
    for (int i = 0; i < 3; ++i) CHECK(pe0[i] == 0.0);
    // layout: x | sin l0 | cos l0 | sin l1 | cos l1 | ...
    for (int l = 0; l < 4; ++l)
        for (int i = 0; i < 3; ++i) {
            CHECK(pe0[3 + 6 * l + i] == 0.0);
            CHECK(pe0[6 + 6 * l + i] == 1.0);
        }

    const double x[3] = {0.7, -0.3, 0.1};
    const auto pe_id = positional_encoding({x, 3}, 0);
    REQUIRE(pe_id.size() == 3);
    CHECK(pe_id[0] == 0.7);

    const double half[3] = {0.5, 0, 0};
    const auto pe1 = positional_encoding({half, 3}, 1);
    REQUIRE(pe1.size() == 9);
    CHECK(pe1[3] == doctest::Approx(1.0).epsilon(1e-15));  // sin(pi/2)
}

TEST_CASE("positional encoding: tape and plain versions agree") {
    Rng rng(1);
    Tensor x = random_tensor(5, 3, rng);
    Tape tape;
    const auto node = positional_encoding(tape, tape.leaf(x), 4);
    const auto& v = tape.value(node);
    REQUIRE(v.cols() == positional_encoding_dim(3, 4));
    for (std::int64_t i = 0; i < 5; ++i) {
        const auto row = positional_encoding({x.values.data() + i * 3, 3}, 4);
        for (std::int64_t j = 0; j < v.cols(); ++j)
            CHECK(v.values[i * v.cols() + j] == doctest::Approx(row[j]).epsilon(1e-15));
    }
}

TEST_CASE("mlp: zero weights yield the bias") {
    MlpSpec spec;
    spec.in_dim = 3;
    spec.out_dim = 2;
    spec.depth = 1;
    Rng rng(2);
    Mlp mlp = Mlp::init(spec, rng, /*final_layer_scale=*/0.0);
    mlp.biases[0].values = {0.25, -0.5};
    Rng rng2(3);
    const Tensor in = random_tensor(4, 3, rng2);
    const Tensor out = mlp.forward_plain(in);
    for (int i = 0; i < 4; ++i) {
        CHECK(out.values[i * 2] == 0.25);
        CHECK(out.values[i * 2 + 1] == -0.5);
    }
}

TEST_CASE("mlp: identity-initialized linear net reproduces input") {
    MlpSpec spec;
    spec.in_dim = 3;
    spec.out_dim = 3;
    spec.depth = 2;
    spec.width = 3;
    spec.activation = Activation::None;
    Rng rng(4);
    Mlp mlp = Mlp::init(spec, rng);
    for (auto& w : mlp.weights) {
        std::fill(w.values.begin(), w.values.end(), 0.0);
        for (int i = 0; i < 3; ++i) w.values[i * 3 + i] = 1.0;
    }
    const Tensor in = random_tensor(6, 3, rng);
    const Tensor out = mlp.forward_plain(in);
    for (std::size_t i = 0; i < in.values.size(); ++i) CHECK(out.values[i] == in.values[i]);
}

TEST_CASE("mlp: matches straight-line recomputation with skip concat") {
    MlpSpec spec;
    spec.in_dim = 4;
    spec.out_dim = 2;
    spec.depth = 3;
    spec.width = 5;
    spec.skip_layers = {1};
    Rng rng(5);
    Mlp mlp = Mlp::init(spec, rng);
    const Tensor in = random_tensor(7, 4, rng);
    const Tensor out = mlp.forward_plain(in);

    auto softplus = [](double v) { return std::log1p(std::exp(v)); };
    for (std::int64_t row = 0; row < 7; ++row) {
        // layer 0: 4 -> 5
        std::vector<double> h(5, 0.0);
        for (int j = 0; j < 5; ++j) {
            double s = mlp.biases[0].values[j];
            for (int l = 0; l < 4; ++l) s += in.values[row * 4 + l] * mlp.weights[0].values[l * 5 + j];
            h[j] = softplus(s);
        }
        // layer 1 with skip: concat(h, x) 9 -> 5
        std::vector<double> cat(h);
        for (int l = 0; l < 4; ++l) cat.push_back(in.values[row * 4 + l]);
        std::vector<double> h2(5, 0.0);
        for (int j = 0; j < 5; ++j) {
            double s = mlp.biases[1].values[j];
            for (int l = 0; l < 9; ++l) s += cat[l] * mlp.weights[1].values[l * 5 + j];
            h2[j] = softplus(s);
        }
        // layer 2: 5 -> 2, linear
        for (int j = 0; j < 2; ++j) {
            double s = mlp.biases[2].values[j];
            for (int l = 0; l < 5; ++l) s += h2[l] * mlp.weights[2].values[l * 2 + j];
            CHECK(out.values[row * 2 + j] == doctest::Approx(s).epsilon(1e-12));
        }
    }

    // Tape forward agrees with plain forward.
    Tape tape;
    Tensor in_copy = in;
    const auto node = mlp.forward(tape, tape.leaf(in_copy));
    const auto& tv = tape.value(node);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        CHECK(tv.values[i] == doctest::Approx(out.values[i]).epsilon(1e-14));
}

TEST_CASE("backward: linear probe gradient is the input") {
    Tensor w({1, 4});
    Rng rng(6);
    for (auto& v : w.values) v = rng.uniform(-1, 1);
    const Tensor x = random_tensor(1, 4, rng);
    Tape tape;
    const auto wn = tape.leaf(w);
    const auto xn = tape.constant(1, 4, x.values);
    const auto loss = tape.sum_all(tape.mul(wn, xn));
    w.zero_grad();
    tape.backward_scalar(loss);
    for (int i = 0; i < 4; ++i) CHECK(w.grad[i] == doctest::Approx(x.values[i]).epsilon(1e-15));
}

TEST_CASE("backward: untouched parameters keep zero gradient") {
    Tensor used({1, 2}), unused({1, 2});
    used.values = {1, 2};
    unused.values = {3, 4};
    used.zero_grad();
    unused.zero_grad();
    Tape tape;
    const auto u = tape.leaf(used);
    const auto loss = tape.sum_all(tape.square(u));
    tape.backward_scalar(loss);
    CHECK(unused.grad[0] == 0.0);
    CHECK(unused.grad[1] == 0.0);
    CHECK(used.grad[0] != 0.0);
}

TEST_CASE("backward: rejects non-scalar losses") {
    Tensor w({2, 2});
    Tape tape;
    const auto n = tape.leaf(w);
    CHECK_THROWS_AS(tape.backward_scalar(n), NotScalar);
}

TEST_CASE("gradient check: every primitive against finite differences") {
    Rng rng(7);

    SUBCASE("matmul + bias") {
        Tensor p = random_tensor(3, 4, rng);
        Tensor other = random_tensor(4, 2, rng);
        Tensor bias = random_tensor(1, 2, rng);
        check_gradient(p, [&](Tape& t, Tape::NodeId x) {
            return t.mean_all(t.square(t.add_row_bias(t.matmul(x, t.leaf(other)), t.leaf(bias))));
        });
        check_gradient(other, [&](Tape& t, Tape::NodeId x) {
            Tensor& a = p;
            return t.mean_all(t.square(t.add_row_bias(t.matmul(t.leaf(a), x), t.leaf(bias))));
        });
        check_gradient(bias, [&](Tape& t, Tape::NodeId x) {
            return t.mean_all(t.square(t.add_row_bias(t.matmul(t.leaf(p), t.leaf(other)), x)));
        });
    }
    SUBCASE("softplus") {
        Tensor p = random_tensor(4, 4, rng, -3, 3);
        check_gradient(p, [](Tape& t, Tape::NodeId x) { return t.mean_all(t.square(t.softplus(x))); });
    }
    SUBCASE("sigmoid") {
        Tensor p = random_tensor(4, 4, rng, -3, 3);
        check_gradient(p, [](Tape& t, Tape::NodeId x) { return t.mean_all(t.square(t.sigmoid(x))); });
    }
    SUBCASE("sin/cos") {
        Tensor p = random_tensor(4, 3, rng, -2, 2);
        check_gradient(p, [](Tape& t, Tape::NodeId x) {
            return t.mean_all(t.mul(t.sin_elem(x), t.cos_elem(t.scale(x, 2.0))));
        });
    }
    SUBCASE("concat + slice") {
        Tensor p = random_tensor(3, 3, rng);
        Tensor q = random_tensor(3, 2, rng);
        check_gradient(p, [&](Tape& t, Tape::NodeId x) {
            const Tape::NodeId parts[2] = {x, t.leaf(q)};
            const auto cat = t.concat_cols(parts);
            return t.mean_all(t.square(t.slice_cols(cat, 1, 3)));
        });
    }
    SUBCASE("broadcast rows") {
        Tensor p = random_tensor(1, 4, rng);
        Tensor m = random_tensor(5, 4, rng);
        check_gradient(p, [&](Tape& t, Tape::NodeId x) {
            return t.mean_all(t.square(t.mul(t.broadcast_rows(x, 5), t.leaf(m))));
        });
    }
    SUBCASE("gather rows") {
        Tensor p = random_tensor(6, 3, rng);
        check_gradient(p, [](Tape& t, Tape::NodeId x) {
            return t.mean_all(t.square(t.gather_rows(x, {0, 2, 2, 5})));
        });
    }
    SUBCASE("softmax rows") {
        Tensor p = random_tensor(4, 5, rng, -1, 1);
        Tensor probe = random_tensor(4, 5, rng);
        check_gradient(p, [&](Tape& t, Tape::NodeId x) {
            return t.sum_all(t.mul(t.softmax_rows(x, 3.0), t.leaf(probe)));
        });
    }
    SUBCASE("normalize rows") {
        Tensor p = random_tensor(4, 3, rng, 0.5, 1.5);
        Tensor probe = random_tensor(4, 3, rng);
        check_gradient(p, [&](Tape& t, Tape::NodeId x) {
            return t.sum_all(t.mul(t.normalize_rows(x), t.leaf(probe)));
        });
    }
    SUBCASE("sum_rows and arithmetic") {
        Tensor p = random_tensor(4, 3, rng);
        Tensor q = random_tensor(4, 3, rng);
        check_gradient(p, [&](Tape& t, Tape::NodeId x) {
            const auto diff = t.sub(t.mul(x, t.leaf(q)), t.add(x, t.leaf(q)));
            return t.mean_all(t.square(t.sum_rows(diff)));
        });
    }
    SUBCASE("full mlp with skip") {
        MlpSpec spec;
        spec.in_dim = 3;
        spec.out_dim = 2;
        spec.depth = 3;
        spec.width = 4;
        spec.skip_layers = {1};
        Mlp mlp = Mlp::init(spec, rng);
        Tensor in = random_tensor(5, 3, rng);
        auto loss_graph = [&](Tape& t) {
            return t.mean_all(t.square(mlp.forward(t, t.leaf(in))));
        };
        auto scalar = [&]() {
            Tape t;
            return t.value(loss_graph(t)).values[0];
        };
        Tape tape;
        const auto loss = loss_graph(tape);
        mlp.zero_grad();
        tape.backward_scalar(loss);
        for (Tensor* param : mlp.parameters()) {
            const auto fd = oracle::fd_grad(*param, scalar);
            CHECK(oracle::rel_error(param->grad, fd) < 1e-6);
        }
    }
}

TEST_CASE("scaled_softmax: closed forms and properties") {
    const double eq[4] = {0.3, 0.3, 0.3, 0.3};
    const auto u = scaled_softmax({eq, 4}, 20.0);
    for (double v : u) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    const double two[2] = {1.0, 0.0};
    const auto p = scaled_softmax({two, 2}, 20.0);
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-20.0))).epsilon(1e-12));

    Rng rng(8);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> logits(1 + rng.uniform_index(16));
        for (auto& v : logits) v = rng.uniform(-50, 50);
        const auto s = scaled_softmax(logits, 20.0);
        double sum = 0;
        std::size_t argmax_s = 0, argmax_l = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(s[i] >= 0.0);
            sum += s[i];
            if (s[i] > s[argmax_s]) argmax_s = i;
            if (logits[i] > logits[argmax_l]) argmax_l = i;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
        CHECK(argmax_s == argmax_l);

        // Invariant under adding a constant to all logits.
        std::vector<double> shifted = logits;
        for (auto& v : shifted) v += 17.5;
        const auto s2 = scaled_softmax(shifted, 20.0);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(s2[i] == doctest::Approx(s[i]).epsilon(1e-9));
    }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
    Tensor p({1, 3});
    p.values = {1.0, -2.0, 3.0};
    p.zero_grad();
    AdamState adam(0.01);
    Tensor* params[1] = {&p};
    adam.step(params);
    CHECK(p.values[0] == 1.0);
    CHECK(p.values[1] == -2.0);
    CHECK(p.values[2] == 3.0);
    CHECK(adam.step_count == 1);
}

TEST_CASE("adam: first step moves by about -lr for unit gradient") {
    Tensor p({1, 1});
    p.values = {0.5};
    p.ensure_grad();
    p.grad = {1.0};
    AdamState adam(0.001);
    Tensor* params[1] = {&p};
    adam.step(params);
    CHECK(p.values[0] == doctest::Approx(0.5 - 0.001).epsilon(1e-6));
}

TEST_CASE("adam: converges on a quadratic") {
    Tensor p({1, 1});
    p.values = {1.0};
    AdamState adam(0.05);
    Tensor* params[1] = {&p};
    for (int i = 0; i < 100; ++i) {
        p.zero_grad();
        p.grad[0] = 2.0 * p.values[0];  // d/dp p^2
        adam.step(params);
    }
    CHECK(std::fabs(p.values[0]) < 0.5);
}

TEST_CASE("autoencoder: sigmoid output stays in [0,1]^3 and composes") {
    Rng rng(9);
    Autoencoder ae = Autoencoder::init(16, 3, 8, 32, rng);
    Tensor colors = random_tensor(10, 3, rng, 0, 1);
    const Tensor out = ae.forward(colors);
    for (double v : out.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    const Tensor lat = ae.encode(colors);
    const Tensor dec = ae.decode(lat);
    for (std::size_t i = 0; i < out.values.size(); ++i) CHECK(dec.values[i] == out.values[i]);
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
    Rng rng(10);
    Checkpoint ck;
    Tensor w = random_tensor(4, 3, rng);
    ck.add_f32("w", w.values, {4, 3});
    std::vector<std::uint32_t> idx = {1, 2, 3};
    ck.add_u32("idx", idx, {3});
    ck.add_text("meta", "{\"k\":1}");

    const auto bytes1 = ck.serialize();
    const Checkpoint back = Checkpoint::deserialize(bytes1);
    const auto bytes2 = back.serialize();
    CHECK(bytes1 == bytes2);
    CHECK(back.get_u32("idx") == idx);
    CHECK(back.get_text("meta") == "{\"k\":1}");
    // f32 storage: values round to float once, then survive exactly.
    const auto loaded = back.get_f32_as_f64("w");
    for (std::size_t i = 0; i < loaded.size(); ++i)
        CHECK(loaded[i] == static_cast<double>(static_cast<float>(w.values[i])));
}

TEST_CASE("checkpoint: corrupted payload is rejected") {
    Checkpoint ck;
    ck.add_text("a", "hello");
    auto bytes = ck.serialize();
    bytes[0] = 'X';
    CHECK_THROWS_AS(Checkpoint::deserialize(bytes), ParseError);
}
