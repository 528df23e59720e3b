#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "hypernas/tensor.hpp"

namespace hypernas {

using NodeId = int32_t;

// Reverse-mode differentiation tape. Nodes are appended in execution order,
// which is already a topological order, so the backward pass is a single
// reverse sweep that visits each recorded node exactly once. Gradients of
// repeated uses of a node accumulate additively.
//
// Tensors recorded on the tape are immutable; a tape is single-threaded.
// Independent tapes may run concurrently.
class Tape {
public:
    NodeId leaf(Tensor value);              // differentiable input (parameter)
    NodeId constant(Tensor value);          // non-differentiable input (data)

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool requires_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

    // Gradient of the last backward() w.r.t. node `id`; zeros if untouched.
    Tensor grad(NodeId id) const;
    bool has_grad(NodeId id) const { return !nodes_[static_cast<size_t>(id)].grad.data.empty(); }

    // Accumulates d(loss)/d(node) for every differentiable node reachable
    // from `loss`, which must be a scalar. May be called more than once per
    // tape (contributions add); use a fresh tape or zero_grad() to reset.
    void backward(NodeId loss);
    void zero_grad();

    size_t size() const { return nodes_.size(); }

    // Smallest |x| seen among inputs of relu/maxpool nodes recorded on this
    // tape. Finite-difference checks use it to flag kink-adjacent probes.
    double min_kink_distance() const { return min_kink_distance_; }

    // ---- arithmetic ----
    NodeId matmul(NodeId a, NodeId b);                    // [m,k]x[k,n] -> [m,n]
    NodeId add(NodeId a, NodeId b);                       // same shape
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);                       // elementwise
    NodeId scale(NodeId a, double c);
    NodeId add_rowvec(NodeId a, NodeId row);              // [m,n] + [1,n]

    // ---- elementwise nonlinearities ----
    NodeId relu(NodeId a);                                // subgradient at 0 is 0
    NodeId sigmoid(NodeId a);
    NodeId softplus(NodeId a);                            // log(1+exp(x)), stable
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId pow_const(NodeId a, double q);                 // x^q, x >= 0, q >= 1

    // ---- reductions / shape ----
    NodeId sum_all(NodeId a);                             // -> [1]
    NodeId mean_all(NodeId a);                            // -> [1]
    NodeId mean_rows(NodeId a);                           // [r,c] -> [1,c]
    NodeId row(NodeId a, int64_t i);                      // [r,c] -> [1,c]
    NodeId gather_rows(NodeId table, std::vector<int> idx);  // [R,c] -> [|idx|,c]
    NodeId reshape(NodeId a, std::vector<int64_t> shape);
    NodeId take_prefix(NodeId a, int64_t n);              // flat first n -> [n]

    // ---- image ops (NCHW) ----
    NodeId conv2d(NodeId x, NodeId w, int stride, int pad);
    NodeId avgpool2d(NodeId x, int k, int stride, int pad_lo, int pad_hi);  // divisor k*k
    NodeId maxpool2d(NodeId x, int k, int stride, int pad_lo, int pad_hi);
    NodeId batchnorm2d(NodeId x, double eps = 1e-5);      // batch stats, no affine
    NodeId channel_dup(NodeId x);                         // [n,c,h,w] -> [n,2c,h,w]
    NodeId global_avg_pool(NodeId x);                     // [n,c,h,w] -> [n,c]
    NodeId zeros_like_of(NodeId x);                       // constant zeros, same shape

    // Mean cross-entropy of row-wise softmax(logits) against integer labels.
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until first touched by backward
        bool requires_grad = false;
        std::function<void(Tape&)> backprop;  // null for inputs
    };

    NodeId push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);
    Tensor& grad_buf(NodeId id);
    void note_kink(const Tensor& input);

    std::vector<Node> nodes_;
    double min_kink_distance_ = std::numeric_limits<double>::infinity();
};

}  // namespace hypernas
