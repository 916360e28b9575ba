#include "spav/autodiff.hpp"

#include <cmath>

#include "spav/threading.hpp"

namespace spav {

namespace {

double stable_softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void matmul_raw(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                std::int64_t n) {
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            double* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
            const double* arow = a + i * k;
            for (std::int64_t l = 0; l < k; ++l) {
                const double av = arow[l];
                if (av == 0.0) continue;
                const double* brow = b + l * n;
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }, 64);
}

void matmul_nt_raw(const double* a, const double* b, double* c, std::int64_t m, std::int64_t n,
                   std::int64_t k) {
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const double* arow = a + i * n;
            double* crow = c + i * k;
            for (std::int64_t l = 0; l < k; ++l) {
                const double* brow = b + l * n;
                double s = 0.0;
                for (std::int64_t j = 0; j < n; ++j) s += arow[j] * brow[j];
                crow[l] = s;
            }
        }
    }, 64);
}

void matmul_tn_acc_raw(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                       std::int64_t n) {
    parallel_for(static_cast<std::size_t>(k), [&](std::size_t l0, std::size_t l1) {
        for (std::size_t l = l0; l < l1; ++l) {
            double* crow = c + l * n;
            for (std::int64_t i = 0; i < m; ++i) {
                const double av = a[i * k + l];
                if (av == 0.0) continue;
                const double* brow = b + i * n;
                for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }, 8);
}

// --- Tape ---

Tape::NodeId Tape::push(Tensor value, std::function<void(Tape&, Node&)> backprop) {
    Node node;
    node.value = std::move(value);
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

std::vector<double>& Tape::adj(NodeId id) {
    Node& n = nodes_[id];
    if (n.adj.size() != n.value.values.size()) n.adj.assign(n.value.values.size(), 0.0);
    return n.adj;
}

std::span<const double> Tape::adjoint(NodeId id) const {
    const Node& n = nodes_[id];
    return {n.adj.data(), n.adj.size()};
}

Tape::NodeId Tape::leaf(Tensor& param) {
    Tensor v;
    v.shape = {param.rows(), param.cols()};
    v.values = param.values;
    NodeId id = push(std::move(v), nullptr);
    nodes_[id].bound = &param;
    return id;
}

Tape::NodeId Tape::input(std::int64_t rows, std::int64_t cols, std::span<const double> values) {
    Tensor v;
    v.shape = {rows, cols};
    v.values.assign(values.begin(), values.end());
    if (v.size() != rows * cols) throw ShapeMismatch("input: value count != rows*cols");
    // Differentiable but unbound: adjoint readable after backward.
    return push(std::move(v), [](Tape&, Node&) {});
}

Tape::NodeId Tape::constant(std::int64_t rows, std::int64_t cols, std::span<const double> values) {
    Tensor v;
    v.shape = {rows, cols};
    v.values.assign(values.begin(), values.end());
    if (v.size() != rows * cols) throw ShapeMismatch("constant: value count != rows*cols");
    return push(std::move(v), nullptr);
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.cols() != tb.rows()) throw ShapeMismatch("matmul: inner dimensions disagree");
    const std::int64_t m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out;
    out.shape = {m, n};
    out.values.resize(static_cast<std::size_t>(m * n));
    matmul_raw(ta.values.data(), tb.values.data(), out.values.data(), m, k, n);
    return push(std::move(out), [a, b, m, k, n](Tape& t, Node& node) {
        const auto& d = node.adj;
        if (t.nodes_[a].backprop || t.nodes_[a].bound) {
            auto& da = t.adj(a);
            // dA += dC B^T, computed into a scratch then added (keeps += deterministic).
            std::vector<double> scratch(static_cast<std::size_t>(m * k));
            matmul_nt_raw(d.data(), t.nodes_[b].value.values.data(), scratch.data(), m, n, k);
            for (std::size_t i = 0; i < scratch.size(); ++i) da[i] += scratch[i];
        }
        if (t.nodes_[b].backprop || t.nodes_[b].bound) {
            auto& db = t.adj(b);
            matmul_tn_acc_raw(t.nodes_[a].value.values.data(), d.data(), db.data(), m, k, n);
        }
    });
}

Tape::NodeId Tape::add_row_bias(NodeId x, NodeId bias) {
    const Tensor& tx = nodes_[x].value;
    const Tensor& tb = nodes_[bias].value;
    if (tb.rows() != 1 || tb.cols() != tx.cols()) throw ShapeMismatch("add_row_bias: bias must be [1,n]");
    Tensor out = tx;
    const std::int64_t m = tx.rows(), n = tx.cols();
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out.values[i * n + j] += tb.values[j];
    return push(std::move(out), [x, bias, m, n](Tape& t, Node& node) {
        const auto& d = node.adj;
        if (t.nodes_[x].backprop || t.nodes_[x].bound) {
            auto& dx = t.adj(x);
            for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
        }
        if (t.nodes_[bias].backprop || t.nodes_[bias].bound) {
            auto& db = t.adj(bias);
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < n; ++j) db[j] += d[i * n + j];
        }
    });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.shape != tb.shape) throw ShapeMismatch("add: shapes disagree");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += tb.values[i];
    return push(std::move(out), [a, b](Tape& t, Node& node) {
        const auto& d = node.adj;
        for (NodeId p : {a, b}) {
            if (!(t.nodes_[p].backprop || t.nodes_[p].bound)) continue;
            auto& dp = t.adj(p);
            for (std::size_t i = 0; i < d.size(); ++i) dp[i] += d[i];
        }
    });
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.shape != tb.shape) throw ShapeMismatch("sub: shapes disagree");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= tb.values[i];
    return push(std::move(out), [a, b](Tape& t, Node& node) {
        const auto& d = node.adj;
        if (t.nodes_[a].backprop || t.nodes_[a].bound) {
            auto& da = t.adj(a);
            for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
        }
        if (t.nodes_[b].backprop || t.nodes_[b].bound) {
            auto& db = t.adj(b);
            for (std::size_t i = 0; i < d.size(); ++i) db[i] -= d[i];
        }
    });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (ta.shape != tb.shape) throw ShapeMismatch("mul: shapes disagree");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= tb.values[i];
    return push(std::move(out), [a, b](Tape& t, Node& node) {
        const auto& d = node.adj;
        if (t.nodes_[a].backprop || t.nodes_[a].bound) {
            auto& da = t.adj(a);
            const auto& vb = t.nodes_[b].value.values;
            for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * vb[i];
        }
        if (t.nodes_[b].backprop || t.nodes_[b].bound) {
            auto& db = t.adj(b);
            const auto& va = t.nodes_[a].value.values;
            for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * va[i];
        }
    });
}

Tape::NodeId Tape::scale(NodeId x, double s) {
    Tensor out = nodes_[x].value;
    for (auto& v : out.values) v *= s;
    return push(std::move(out), [x, s](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += s * d[i];
    });
}

Tape::NodeId Tape::add_scalar(NodeId x, double s) {
    Tensor out = nodes_[x].value;
    for (auto& v : out.values) v += s;
    return push(std::move(out), [x](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
    });
}

Tape::NodeId Tape::softplus(NodeId x) {
    Tensor out = nodes_[x].value;
    for (auto& v : out.values) v = stable_softplus(v);
    return push(std::move(out), [x](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        const auto& vx = t.nodes_[x].value.values;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * stable_sigmoid(vx[i]);
    });
}

Tape::NodeId Tape::sigmoid(NodeId x) {
    Tensor out = nodes_[x].value;
    for (auto& v : out.values) v = stable_sigmoid(v);
    return push(std::move(out), [x](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        const auto& y = node.value.values;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * y[i] * (1.0 - y[i]);
    });
}

Tape::NodeId Tape::sin_elem(NodeId x) {
    Tensor out = nodes_[x].value;
    for (auto& v : out.values) v = std::sin(v);
    return push(std::move(out), [x](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        const auto& vx = t.nodes_[x].value.values;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * std::cos(vx[i]);
    });
}

Tape::NodeId Tape::cos_elem(NodeId x) {
    Tensor out = nodes_[x].value;
    for (auto& v : out.values) v = std::cos(v);
    return push(std::move(out), [x](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        const auto& vx = t.nodes_[x].value.values;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] -= d[i] * std::sin(vx[i]);
    });
}

Tape::NodeId Tape::square(NodeId x) {
    Tensor out = nodes_[x].value;
    for (auto& v : out.values) v *= v;
    return push(std::move(out), [x](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        const auto& vx = t.nodes_[x].value.values;
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += 2.0 * d[i] * vx[i];
    });
}

Tape::NodeId Tape::concat_cols(std::span<const NodeId> parts) {
    if (parts.empty()) throw ShapeMismatch("concat_cols: no parts");
    const std::int64_t m = nodes_[parts[0]].value.rows();
    std::int64_t n = 0;
    for (NodeId p : parts) {
        if (nodes_[p].value.rows() != m) throw ShapeMismatch("concat_cols: row counts disagree");
        n += nodes_[p].value.cols();
    }
    Tensor out;
    out.shape = {m, n};
    out.values.resize(static_cast<std::size_t>(m * n));
    std::int64_t off = 0;
    for (NodeId p : parts) {
        const Tensor& tp = nodes_[p].value;
        const std::int64_t pc = tp.cols();
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < pc; ++j) out.values[i * n + off + j] = tp.values[i * pc + j];
        off += pc;
    }
    std::vector<NodeId> ps(parts.begin(), parts.end());
    return push(std::move(out), [ps, m, n](Tape& t, Node& node) {
        const auto& d = node.adj;
        std::int64_t off = 0;
        for (NodeId p : ps) {
            const std::int64_t pc = t.nodes_[p].value.cols();
            if (t.nodes_[p].backprop || t.nodes_[p].bound) {
                auto& dp = t.adj(p);
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < pc; ++j) dp[i * pc + j] += d[i * n + off + j];
            }
            off += pc;
        }
    });
}

Tape::NodeId Tape::slice_cols(NodeId x, std::int64_t begin, std::int64_t count) {
    const Tensor& tx = nodes_[x].value;
    const std::int64_t m = tx.rows(), n = tx.cols();
    if (begin < 0 || begin + count > n) throw ShapeMismatch("slice_cols: out of range");
    Tensor out;
    out.shape = {m, count};
    out.values.resize(static_cast<std::size_t>(m * count));
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < count; ++j) out.values[i * count + j] = tx.values[i * n + begin + j];
    return push(std::move(out), [x, begin, count, m, n](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < count; ++j) dx[i * n + begin + j] += d[i * count + j];
    });
}

Tape::NodeId Tape::broadcast_rows(NodeId row, std::int64_t m) {
    const Tensor& tr = nodes_[row].value;
    if (tr.rows() != 1) throw ShapeMismatch("broadcast_rows: source must be [1,n]");
    const std::int64_t n = tr.cols();
    Tensor out;
    out.shape = {m, n};
    out.values.resize(static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out.values[i * n + j] = tr.values[j];
    return push(std::move(out), [row, m, n](Tape& t, Node& node) {
        if (!(t.nodes_[row].backprop || t.nodes_[row].bound)) return;
        auto& dr = t.adj(row);
        const auto& d = node.adj;
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) dr[j] += d[i * n + j];
    });
}

Tape::NodeId Tape::gather_rows(NodeId x, std::vector<std::uint32_t> rows) {
    const Tensor& tx = nodes_[x].value;
    const std::int64_t n = tx.cols();
    Tensor out;
    out.shape = {static_cast<std::int64_t>(rows.size()), n};
    out.values.resize(rows.size() * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= tx.rows()) throw ShapeMismatch("gather_rows: row index out of range");
        for (std::int64_t j = 0; j < n; ++j) out.values[i * n + j] = tx.values[rows[i] * n + j];
    }
    return push(std::move(out), [x, rows = std::move(rows), n](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::int64_t j = 0; j < n; ++j) dx[rows[i] * n + j] += d[i * n + j];
    });
}

Tape::NodeId Tape::softmax_rows(NodeId logits, double s) {
    const Tensor& tx = nodes_[logits].value;
    const std::int64_t m = tx.rows(), n = tx.cols();
    Tensor out;
    out.shape = {m, n};
    out.values.resize(static_cast<std::size_t>(m * n));
    for (std::int64_t i = 0; i < m; ++i) {
        const double* z = tx.values.data() + i * n;
        double* y = out.values.data() + i * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t j = 0; j < n; ++j) mx = std::max(mx, s * z[j]);
        double sum = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            y[j] = std::exp(s * z[j] - mx);
            sum += y[j];
        }
        for (std::int64_t j = 0; j < n; ++j) y[j] /= sum;
    }
    return push(std::move(out), [logits, s, m, n](Tape& t, Node& node) {
        if (!(t.nodes_[logits].backprop || t.nodes_[logits].bound)) return;
        auto& dz = t.adj(logits);
        const auto& d = node.adj;
        const auto& y = node.value.values;
        for (std::int64_t i = 0; i < m; ++i) {
            const double* yi = y.data() + i * n;
            const double* di = d.data() + i * n;
            double dot = 0;
            for (std::int64_t j = 0; j < n; ++j) dot += di[j] * yi[j];
            for (std::int64_t j = 0; j < n; ++j) dz[i * n + j] += s * yi[j] * (di[j] - dot);
        }
    });
}

Tape::NodeId Tape::normalize_rows(NodeId x, double eps) {
    const Tensor& tx = nodes_[x].value;
    const std::int64_t m = tx.rows(), n = tx.cols();
    Tensor out;
    out.shape = {m, n};
    out.values.resize(static_cast<std::size_t>(m * n));
    std::vector<double> norms(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        const double* v = tx.values.data() + i * n;
        double s = 0;
        for (std::int64_t j = 0; j < n; ++j) s += v[j] * v[j];
        const double nv = std::max(std::sqrt(s), eps);
        norms[i] = nv;
        for (std::int64_t j = 0; j < n; ++j) out.values[i * n + j] = v[j] / nv;
    }
    return push(std::move(out), [x, m, n, norms = std::move(norms)](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        const auto& y = node.value.values;
        for (std::int64_t i = 0; i < m; ++i) {
            const double* yi = y.data() + i * n;
            const double* di = d.data() + i * n;
            double dot = 0;
            for (std::int64_t j = 0; j < n; ++j) dot += di[j] * yi[j];
            for (std::int64_t j = 0; j < n; ++j) dx[i * n + j] += (di[j] - dot * yi[j]) / norms[i];
        }
    });
}

Tape::NodeId Tape::sum_all(NodeId x) {
    const Tensor& tx = nodes_[x].value;
    Tensor out;
    out.shape = {1, 1};
    double s = 0;
    for (double v : tx.values) s += v;
    out.values = {s};
    return push(std::move(out), [x](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const double d = node.adj[0];
        for (auto& v : dx) v += d;
    });
}

Tape::NodeId Tape::mean_all(NodeId x) {
    const double inv = 1.0 / static_cast<double>(nodes_[x].value.size());
    return scale(sum_all(x), inv);
}

Tape::NodeId Tape::sum_rows(NodeId x) {
    const Tensor& tx = nodes_[x].value;
    const std::int64_t m = tx.rows(), n = tx.cols();
    Tensor out;
    out.shape = {m, 1};
    out.values.resize(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        double s = 0;
        for (std::int64_t j = 0; j < n; ++j) s += tx.values[i * n + j];
        out.values[i] = s;
    }
    return push(std::move(out), [x, m, n](Tape& t, Node& node) {
        if (!(t.nodes_[x].backprop || t.nodes_[x].bound)) return;
        auto& dx = t.adj(x);
        const auto& d = node.adj;
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) dx[i * n + j] += d[i];
    });
}

Tape::NodeId Tape::lbs_blend(NodeId points, NodeId weights, std::vector<Transform> motions,
                             bool positions) {
    const Tensor& tp = nodes_[points].value;
    const Tensor& tw = nodes_[weights].value;
    const std::int64_t m = tp.rows();
    const std::int64_t nb = tw.cols();
    if (tp.cols() != 3) throw ShapeMismatch("lbs_blend: points must be [n,3]");
    if (tw.rows() != m) throw ShapeMismatch("lbs_blend: weight rows != point rows");
    if (nb != static_cast<std::int64_t>(motions.size()))
        throw ShapeMismatch("lbs_blend: weight cols != bone count");

    Tensor out;
    out.shape = {m, 3};
    out.values.resize(static_cast<std::size_t>(m * 3));
    auto apply = [&](const Transform& t, const Vec3d& v) {
        return positions ? t.apply_point(v) : t.apply_dir(v);
    };
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const Vec3d x{tp.values[i * 3], tp.values[i * 3 + 1], tp.values[i * 3 + 2]};
            Vec3d acc{0, 0, 0};
            for (std::int64_t b = 0; b < nb; ++b) {
                const double w = tw.values[i * nb + b];
                if (w == 0.0) continue;
                acc += w * apply(motions[b], x);
            }
            out.values[i * 3] = acc.x;
            out.values[i * 3 + 1] = acc.y;
            out.values[i * 3 + 2] = acc.z;
        }
    }, 256);

    return push(std::move(out),
                [points, weights, motions = std::move(motions), positions, m, nb](Tape& t, Node& node) {
        const auto& d = node.adj;
        const auto& vp = t.nodes_[points].value.values;
        const auto& vw = t.nodes_[weights].value.values;
        const bool need_p = t.nodes_[points].backprop || t.nodes_[points].bound;
        const bool need_w = t.nodes_[weights].backprop || t.nodes_[weights].bound;
        if (!need_p && !need_w) return;
        auto* dp = need_p ? &t.adj(points) : nullptr;
        auto* dw = need_w ? &t.adj(weights) : nullptr;
        for (std::int64_t i = 0; i < m; ++i) {
            const Vec3d x{vp[i * 3], vp[i * 3 + 1], vp[i * 3 + 2]};
            const Vec3d g{d[i * 3], d[i * 3 + 1], d[i * 3 + 2]};
            for (std::int64_t b = 0; b < nb; ++b) {
                const double w = vw[i * nb + b];
                const Transform& mo = motions[b];
                if (dw) {
                    const Vec3d tx = positions ? mo.apply_point(x) : mo.apply_dir(x);
                    (*dw)[i * nb + b] += g.dot(tx);
                }
                if (dp && w != 0.0) {
                    // d/dx of w * (R x + t) is w R; chain with g: w * R^T g
                    const Mat3d& r = mo.rotation;
                    const Vec3d rtg{r(0, 0) * g.x + r(1, 0) * g.y + r(2, 0) * g.z,
                                    r(0, 1) * g.x + r(1, 1) * g.y + r(2, 1) * g.z,
                                    r(0, 2) * g.x + r(1, 2) * g.y + r(2, 2) * g.z};
                    (*dp)[i * 3] += w * rtg.x;
                    (*dp)[i * 3 + 1] += w * rtg.y;
                    (*dp)[i * 3 + 2] += w * rtg.z;
                }
            }
        }
    });
}

void Tape::seed(NodeId id, std::span<const double> grad) {
    auto& a = adj(id);
    if (grad.size() != a.size()) throw ShapeMismatch("seed: gradient size mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += grad[i];
}

void Tape::backward() {
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node& node = nodes_[i];
        if (node.adj.empty()) continue;  // never reached
        if (node.backprop) node.backprop(*this, node);
        if (node.bound) {
            node.bound->ensure_grad();
            for (std::size_t j = 0; j < node.adj.size(); ++j) node.bound->grad[j] += node.adj[j];
        }
    }
}

void Tape::backward_scalar(NodeId loss) {
    const Tensor& t = nodes_[loss].value;
    if (t.size() != 1) throw NotScalar("backward: loss node is not a scalar");
    const double one = 1.0;
    seed(loss, {&one, 1});
    backward();
}

}  // namespace spav
