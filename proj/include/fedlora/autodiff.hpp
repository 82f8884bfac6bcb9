// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedlora/tensor.hpp"

namespace fedlora {

using NodeId = std::size_t;

enum class OpKind {
    Constant,
    Parameter,
    MatMul,
    Transpose,
    Add,
    AddRow,
    Mul,
    Scale,
    Relu,
    SoftmaxRows,
    LayerNorm,
    GatherRows,
    Attention,
    CrossEntropy,
    Sum,
};

/// Define-by-run tape. Nodes are appended in evaluation order, so insertion
/// order is a topological order and backward() walks it in reverse.
///
/// Leaves either reference an external tensor (constant(const Tensor&),
/// param(Tensor&)) or own a copy. Referenced tensors must outlive the graph.
/// Gradients reach only Parameter leaves; they are summed into the leaf
/// tensor's grad slot, which callers zero between batches.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    NodeId constant(const Tensor& t);
    NodeId constant(Tensor&& t);
    NodeId param(Tensor& t);

    const Tensor& value(NodeId id) const;
    double scalar(NodeId id) const;
    OpKind kind(NodeId id) const;
    std::span<const NodeId> inputs(NodeId id) const;
    bool requires_grad(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }

    /// Saved forward state: softmax probabilities for SoftmaxRows,
    /// CrossEntropy and Attention (laid out [batch][head][query][key]).
    std::span<const double> saved(NodeId id) const;

    /// Smallest |input| over every ReLU in the graph (+inf without ReLUs).
    /// Finite-difference checks use it to stay clear of the kink.
    double relu_margin() const;

    /// Reverse sweep from a 1x1 loss node. A graph can be swept once.
    void backward(NodeId loss);

private:
    struct Node {
        OpKind kind = OpKind::Constant;
        std::vector<NodeId> inputs;
        Tensor owned;
        const Tensor* ref = nullptr;
        Tensor* param = nullptr;
        bool requires_grad = false;
        double scalar = 0.0;
        std::vector<std::size_t> index;
        std::vector<double> saved;
    };

    NodeId push(Node node);
    const Node& node(NodeId id) const;

    std::vector<Node> nodes_;
    bool swept_ = false;

    friend NodeId matmul(Graph&, NodeId, NodeId);
    friend NodeId transpose(Graph&, NodeId);
    friend NodeId add(Graph&, NodeId, NodeId);
    friend NodeId add_row(Graph&, NodeId, NodeId);
    friend NodeId mul(Graph&, NodeId, NodeId);
    friend NodeId scale(Graph&, NodeId, double);
    friend NodeId relu(Graph&, NodeId);
    friend NodeId softmax_rows(Graph&, NodeId);
    friend NodeId layer_norm(Graph&, NodeId, NodeId, NodeId, double);
    friend NodeId gather_rows(Graph&, NodeId, std::span<const std::size_t>);
    friend NodeId attention(Graph&, NodeId, NodeId, NodeId, std::span<const std::uint8_t>, std::size_t, std::size_t,
                            std::size_t);
    friend NodeId cross_entropy(Graph&, NodeId, std::span<const int>);
    friend NodeId sum(Graph&, NodeId);
};

/// a[m x n] * b[n x p].
NodeId matmul(Graph& g, NodeId a, NodeId b);
NodeId transpose(Graph& g, NodeId x);
NodeId add(Graph& g, NodeId a, NodeId b);
/// x[m x n] + bias[1 x n] broadcast over rows.
NodeId add_row(Graph& g, NodeId x, NodeId bias);
/// Elementwise product.
NodeId mul(Graph& g, NodeId a, NodeId b);
NodeId scale(Graph& g, NodeId x, double factor);
NodeId relu(Graph& g, NodeId x);
/// Row-wise softmax with per-row max subtraction.
NodeId softmax_rows(Graph& g, NodeId x);
/// Per-row normalization to zero mean / unit variance, then gamma * xhat + beta
/// with gamma and beta shaped [1 x cols]. eps must be positive.
NodeId layer_norm(Graph& g, NodeId x, NodeId gamma, NodeId beta, double eps);
/// out[i] = x[indices[i]].
NodeId gather_rows(Graph& g, NodeId x, std::span<const std::size_t> indices);

/// Masked multi-head scaled dot-product attention over `batch` sequences of
/// `seq_len` rows each. q, k and v are [batch*seq_len x d] with d divisible by
/// `heads`; key_mask has batch*seq_len entries, and keys with mask 0 get -1e9
/// added to their scores before the softmax. Output is the concatenation of
/// the per-head results, [batch*seq_len x d].
NodeId attention(Graph& g, NodeId q, NodeId k, NodeId v, std::span<const std::uint8_t> key_mask, std::size_t batch,
                 std::size_t seq_len, std::size_t heads);

/// Mean softmax cross-entropy of logits[batch x classes] against class
/// indices. Returns a 1x1 node.
NodeId cross_entropy(Graph& g, NodeId logits, std::span<const int> labels);
/// Sum of all entries, as a 1x1 node.
NodeId sum(Graph& g, NodeId x);

/// Builds a scalar loss on a fresh graph, registering the checked tensors
/// through Graph::param.
using LossBuilder = std::function<NodeId(Graph&)>;

/// Compares the autodiff gradient of `build` against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps) for every coordinate of every tensor in
/// `params`. Returns the max relative error, with denominator
/// max(|analytic|, |numeric|, 1e-8). Parameter values are restored exactly.
double grad_check(const LossBuilder& build, std::span<Tensor* const> params, double eps);

}  // namespace fedlora
