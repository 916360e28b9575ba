#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spav/error.hpp"
#include "spav/vec.hpp"

namespace spav {

// Dense f64 tensor with an optional gradient buffer.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until ensure_grad()

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        values.assign(static_cast<std::size_t>(element_count(shape)), 0.0);
    }
    static std::int64_t element_count(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
    std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
    void zero_grad() { grad.assign(values.size(), 0.0); }
};

// Reverse-mode tape over 2-D tensors ([rows, cols]; scalars are [1,1]).
// Nodes are created in topological order; backward() runs one reverse sweep
// and accumulates leaf adjoints into the bound parameter tensors.
class Tape {
  public:
    using NodeId = std::int32_t;

    // Leaf bound to an external parameter; backward adds into param.grad.
    NodeId leaf(Tensor& param);
    // Differentiable input owned by the tape (query its adjoint afterwards).
    NodeId input(std::int64_t rows, std::int64_t cols, std::span<const double> values);
    // Non-differentiable constant.
    NodeId constant(std::int64_t rows, std::int64_t cols, std::span<const double> values);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    // Valid after backward(); empty span if the node was never reached.
    std::span<const double> adjoint(NodeId id) const;

    // --- primitive ops ---
    NodeId matmul(NodeId a, NodeId b);                  // [m,k]x[k,n]
    NodeId add_row_bias(NodeId x, NodeId bias);         // [m,n] + [1,n]
    NodeId add(NodeId a, NodeId b);                     // same shape
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);                     // elementwise
    NodeId scale(NodeId x, double s);
    NodeId add_scalar(NodeId x, double s);
    NodeId softplus(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId sin_elem(NodeId x);
    NodeId cos_elem(NodeId x);
    NodeId square(NodeId x);
    NodeId concat_cols(std::span<const NodeId> parts);
    NodeId slice_cols(NodeId x, std::int64_t begin, std::int64_t count);
    NodeId broadcast_rows(NodeId row, std::int64_t m);  // [1,n] -> [m,n]
    NodeId gather_rows(NodeId x, std::vector<std::uint32_t> rows);
    NodeId softmax_rows(NodeId logits, double scale);   // softmax(scale*logits)
    NodeId normalize_rows(NodeId x, double eps = 1e-12);
    NodeId sum_all(NodeId x);                           // -> [1,1]
    NodeId mean_all(NodeId x);                          // -> [1,1]
    NodeId sum_rows(NodeId x);                          // [m,n] -> [m,1]

    // Blend of per-bone rigid motions: out_i = sum_b w[i,b] * M_b(x_i).
    // Positions use the full motion, directions the rotation only.
    NodeId lbs_blend(NodeId points, NodeId weights, std::vector<Transform> motions, bool positions);

    // Accumulate an external gradient on any node.
    void seed(NodeId id, std::span<const double> grad);
    // Reverse sweep; flushes leaf adjoints into bound parameter grads.
    void backward();
    // Convenience: seeds d(loss)/d(loss)=1; throws NotScalar unless [1,1].
    void backward_scalar(NodeId loss);

    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        std::vector<double> adj;  // lazily sized
        std::function<void(Tape&, Node&)> backprop;  // null for constants
        Tensor* bound = nullptr;  // leaf parameter
    };

    NodeId push(Tensor value, std::function<void(Tape&, Node&)> backprop);
    std::vector<double>& adj(NodeId id);

    std::vector<Node> nodes_;
    friend struct TapeOps;
};

// Raw matmul kernels shared with the optimizer-free paths. All deterministic
// for any worker count (fixed per-element accumulation order).
void matmul_raw(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                std::int64_t n);                            // C = A B
void matmul_nt_raw(const double* a, const double* b, double* c, std::int64_t m, std::int64_t n,
                   std::int64_t k);                         // C[m,k] = A[m,n] B[k,n]^T
void matmul_tn_acc_raw(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                       std::int64_t n);                     // C[k,n] += A[m,k]^T B[m,n]

}  // namespace spav
