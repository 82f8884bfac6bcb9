// SPDX-License-Identifier: Apache-2.0
#include "fedlora/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedlora/errors.hpp"

namespace fedlora {

namespace {

constexpr double kMaskedScore = -1e9;

// out[m x p] += a[m x n] * b[n x p]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t n, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * p;
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a[i * n + k];
            if (aik == 0.0) continue;
            const double* brow = b.data() + k * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
}

// out[m x n] += a[m x p] * b[n x p]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t p, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * p;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * p;
            double acc = 0.0;
            for (std::size_t k = 0; k < p; ++k) acc += arow[k] * brow[k];
            out[i * n + j] += acc;
        }
    }
}

// out[n x p] += a[m x n]^T * b[m x p]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t n, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b.data() + i * p;
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a[i * n + k];
            if (aik == 0.0) continue;
            double* orow = out.data() + k * p;
            for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    }
}

void softmax_inplace(std::span<double> row) {
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (auto& v : row) {
        v = std::exp(v - mx);
        total += v;
    }
    for (auto& v : row) v /= total;
}

std::string shapes(const Tensor& a, const Tensor& b) { return a.shape_str() + " and " + b.shape_str(); }

}  // namespace

NodeId Graph::push(Node n) {
    if (n.kind != OpKind::Constant && n.kind != OpKind::Parameter) {
        n.requires_grad = std::any_of(n.inputs.begin(), n.inputs.end(),
                                      [this](NodeId in) { return nodes_[in].requires_grad; });
    }
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

const Graph::Node& Graph::node(NodeId id) const {
    if (id >= nodes_.size()) throw StateError("node " + std::to_string(id) + " has not been evaluated");
    return nodes_[id];
}

NodeId Graph::constant(const Tensor& t) {
    Node n;
    n.kind = OpKind::Constant;
    n.ref = &t;
    return push(std::move(n));
}

NodeId Graph::constant(Tensor&& t) {
    Node n;
    n.kind = OpKind::Constant;
    n.owned = std::move(t);
    return push(std::move(n));
}

NodeId Graph::param(Tensor& t) {
    Node n;
    n.kind = OpKind::Parameter;
    n.ref = &t;
    n.param = &t;
    n.requires_grad = true;
    return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const {
    const Node& n = node(id);
    return n.ref != nullptr ? *n.ref : n.owned;
}

double Graph::scalar(NodeId id) const {
    const Tensor& t = value(id);
    if (t.size() != 1) throw DimensionError("expected a scalar node, got " + t.shape_str());
    return t.data()[0];
}

OpKind Graph::kind(NodeId id) const { return node(id).kind; }

std::span<const NodeId> Graph::inputs(NodeId id) const { return node(id).inputs; }

bool Graph::requires_grad(NodeId id) const { return node(id).requires_grad; }

std::span<const double> Graph::saved(NodeId id) const { return node(id).saved; }

double Graph::relu_margin() const {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes_) {
        if (n.kind != OpKind::Relu) continue;
        for (double v : value(n.inputs[0]).data()) margin = std::min(margin, std::abs(v));
    }
    return margin;
}

NodeId matmul(Graph& g, NodeId a, NodeId b) {
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (ta.cols() != tb.rows()) throw DimensionError("matmul inner dimensions differ: " + shapes(ta, tb));
    Tensor out(ta.rows(), tb.cols());
    gemm_nn(ta.data(), tb.data(), out.data(), ta.rows(), ta.cols(), tb.cols());
    Graph::Node n;
    n.kind = OpKind::MatMul;
    n.inputs = {a, b};
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId transpose(Graph& g, NodeId x) {
    const Tensor& t = g.value(x);
    Tensor out(t.cols(), t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out(c, r) = t(r, c);
    Graph::Node n;
    n.kind = OpKind::Transpose;
    n.inputs = {x};
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId add(Graph& g, NodeId a, NodeId b) {
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (ta.rows() != tb.rows() || ta.cols() != tb.cols()) throw DimensionError("add shape mismatch: " + shapes(ta, tb));
    Tensor out = ta;
    out.clear_grad();
    auto o = out.data();
    auto y = tb.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
    Graph::Node n;
    n.kind = OpKind::Add;
    n.inputs = {a, b};
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId add_row(Graph& g, NodeId x, NodeId bias) {
    const Tensor& tx = g.value(x);
    const Tensor& tb = g.value(bias);
    if (tb.rows() != 1 || tb.cols() != tx.cols()) throw DimensionError("add_row bias shape mismatch: " + shapes(tx, tb));
    Tensor out(tx.rows(), tx.cols());
    for (std::size_t r = 0; r < tx.rows(); ++r)
        for (std::size_t c = 0; c < tx.cols(); ++c) out(r, c) = tx(r, c) + tb(0, c);
    Graph::Node n;
    n.kind = OpKind::AddRow;
    n.inputs = {x, bias};
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId mul(Graph& g, NodeId a, NodeId b) {
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (ta.rows() != tb.rows() || ta.cols() != tb.cols()) throw DimensionError("mul shape mismatch: " + shapes(ta, tb));
    Tensor out(ta.rows(), ta.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = ta.data()[i] * tb.data()[i];
    Graph::Node n;
    n.kind = OpKind::Mul;
    n.inputs = {a, b};
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId scale(Graph& g, NodeId x, double factor) {
    const Tensor& t = g.value(x);
    Tensor out(t.rows(), t.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = t.data()[i] * factor;
    Graph::Node n;
    n.kind = OpKind::Scale;
    n.inputs = {x};
    n.scalar = factor;
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId relu(Graph& g, NodeId x) {
    const Tensor& t = g.value(x);
    Tensor out(t.rows(), t.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(t.data()[i], 0.0);
    Graph::Node n;
    n.kind = OpKind::Relu;
    n.inputs = {x};
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId softmax_rows(Graph& g, NodeId x) {
    const Tensor& t = g.value(x);
    Tensor out = t;
    out.clear_grad();
    for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.data().subspan(r * out.cols(), out.cols()));
    Graph::Node n;
    n.kind = OpKind::SoftmaxRows;
    n.inputs = {x};
    n.saved.assign(out.data().begin(), out.data().end());
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId layer_norm(Graph& g, NodeId x, NodeId gamma, NodeId beta, double eps) {
    if (!(eps > 0.0)) throw ConfigError("layer_norm eps must be positive, got " + std::to_string(eps));
    const Tensor& tx = g.value(x);
    const Tensor& tg = g.value(gamma);
    const Tensor& tb = g.value(beta);
    const std::size_t rows = tx.rows();
    const std::size_t cols = tx.cols();
    if (tg.rows() != 1 || tg.cols() != cols || tb.rows() != 1 || tb.cols() != cols) {
        throw DimensionError("layer_norm affine must be [1x" + std::to_string(cols) + "], got " + shapes(tg, tb));
    }
    Tensor out(rows, cols);
    // saved = xhat (rows*cols) followed by 1/sqrt(var + eps) per row.
    std::vector<double> saved(rows * cols + rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += tx(r, c);
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = tx(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + eps);
        saved[rows * cols + r] = inv;
        for (std::size_t c = 0; c < cols; ++c) {
            const double xhat = (tx(r, c) - mean) * inv;
            saved[r * cols + c] = xhat;
            out(r, c) = tg(0, c) * xhat + tb(0, c);
        }
    }
    Graph::Node n;
    n.kind = OpKind::LayerNorm;
    n.inputs = {x, gamma, beta};
    n.scalar = eps;
    n.saved = std::move(saved);
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId gather_rows(Graph& g, NodeId x, std::span<const std::size_t> indices) {
    const Tensor& t = g.value(x);
    Tensor out(indices.size(), t.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= t.rows()) {
            throw DimensionError("gather index " + std::to_string(indices[i]) + " out of range for " + t.shape_str());
        }
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * t.cols()), t.cols(),
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * t.cols()));
    }
    Graph::Node n;
    n.kind = OpKind::GatherRows;
    n.inputs = {x};
    n.index.assign(indices.begin(), indices.end());
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId attention(Graph& g, NodeId q, NodeId k, NodeId v, std::span<const std::uint8_t> key_mask, std::size_t batch,
                 std::size_t seq_len, std::size_t heads) {
    const Tensor& tq = g.value(q);
    const Tensor& tk = g.value(k);
    const Tensor& tv = g.value(v);
    const std::size_t rows = batch * seq_len;
    const std::size_t d = tq.cols();
    if (tq.rows() != rows || tk.rows() != rows || tv.rows() != rows || tk.cols() != d || tv.cols() != d) {
        throw DimensionError("attention expects q, k, v of shape [" + std::to_string(rows) + "x" + std::to_string(d) +
                             "], got " + tq.shape_str() + ", " + tk.shape_str() + ", " + tv.shape_str());
    }
    if (heads == 0 || d % heads != 0) throw DimensionError("attention width not divisible by head count");
    if (key_mask.size() != rows) throw DimensionError("attention mask length mismatch");
    const std::size_t dh = d / heads;
    const double factor = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor out(rows, d);
    std::vector<double> probs(batch * heads * seq_len * seq_len);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t base = b * seq_len;
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t col = h * dh;
            double* p = probs.data() + (b * heads + h) * seq_len * seq_len;
            for (std::size_t i = 0; i < seq_len; ++i) {
                double* prow = p + i * seq_len;
                for (std::size_t j = 0; j < seq_len; ++j) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += tq(base + i, col + c) * tk(base + j, col + c);
                    s *= factor;
                    if (key_mask[base + j] == 0) s += kMaskedScore;
                    prow[j] = s;
                }
                softmax_inplace({prow, seq_len});
                for (std::size_t j = 0; j < seq_len; ++j) {
                    const double pij = prow[j];
                    if (pij == 0.0) continue;
                    for (std::size_t c = 0; c < dh; ++c) out(base + i, col + c) += pij * tv(base + j, col + c);
                }
            }
        }
    }
    Graph::Node n;
    n.kind = OpKind::Attention;
    n.inputs = {q, k, v};
    n.index = {batch, seq_len, heads};
    n.scalar = factor;
    n.saved = std::move(probs);
    n.owned = std::move(out);
    return g.push(std::move(n));
}

NodeId cross_entropy(Graph& g, NodeId logits, std::span<const int> labels) {
    const Tensor& t = g.value(logits);
    if (labels.size() != t.rows()) {
        throw DimensionError("cross_entropy got " + std::to_string(labels.size()) + " labels for logits " +
                             t.shape_str());
    }
    const std::size_t classes = t.cols();
    std::vector<double> probs(t.data().begin(), t.data().end());
    double loss = 0.0;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw DataError("label " + std::to_string(y) + " out of range [0, " + std::to_string(classes) +
                            ") at record " + std::to_string(r));
        }
        const auto row = t.data().subspan(r * classes, classes);
        const double mx = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double z : row) total += std::exp(z - mx);
        loss += -(row[static_cast<std::size_t>(y)] - mx - std::log(total));
        softmax_inplace(std::span<double>(probs).subspan(r * classes, classes));
    }
    if (t.rows() > 0) loss /= static_cast<double>(t.rows());
    Graph::Node n;
    n.kind = OpKind::CrossEntropy;
    n.inputs = {logits};
    n.index.assign(labels.begin(), labels.end());
    n.saved = std::move(probs);
    n.owned = Tensor(1, 1, {loss});
    return g.push(std::move(n));
}

NodeId sum(Graph& g, NodeId x) {
    const Tensor& t = g.value(x);
    double total = 0.0;
    for (double v : t.data()) total += v;
    Graph::Node n;
    n.kind = OpKind::Sum;
    n.inputs = {x};
    n.owned = Tensor(1, 1, {total});
    return g.push(std::move(n));
}

void Graph::backward(NodeId loss) {
    if (loss >= nodes_.size()) throw StateError("backward called before the loss node was evaluated");
    if (swept_) throw StateError("backward already ran on this graph; rebuild it with a fresh forward pass");
    if (value(loss).size() != 1) throw DimensionError("backward needs a scalar loss, got " + value(loss).shape_str());
    swept_ = true;

    std::vector<std::vector<double>> grads(nodes_.size());
    auto grad_of = [&](NodeId id) -> std::vector<double>* {
        if (!nodes_[id].requires_grad) return nullptr;
        auto& slot = grads[id];
        if (slot.empty()) slot.assign(value(id).size(), 0.0);
        return &slot;
    };
    grads[loss] = {1.0};

    for (NodeId id = loss + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (!n.requires_grad || grads[id].empty()) continue;
        const std::vector<double>& dy = grads[id];
        const Tensor& y = value(id);

        switch (n.kind) {
            case OpKind::Constant:
                break;
            case OpKind::Parameter:
                n.param->accumulate_grad(dy);
                break;
            case OpKind::MatMul: {
                const Tensor& a = value(n.inputs[0]);
                const Tensor& b = value(n.inputs[1]);
                if (auto* da = grad_of(n.inputs[0])) gemm_nt(dy, b.data(), *da, a.rows(), b.cols(), a.cols());
                if (auto* db = grad_of(n.inputs[1])) gemm_tn(a.data(), dy, *db, a.rows(), a.cols(), b.cols());
                break;
            }
            case OpKind::Transpose: {
                if (auto* dx = grad_of(n.inputs[0])) {
                    const std::size_t r = y.rows(), c = y.cols();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) (*dx)[j * r + i] += dy[i * c + j];
                }
                break;
            }
            case OpKind::Add: {
                for (NodeId in : n.inputs) {
                    if (auto* dx = grad_of(in))
                        for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
                }
                break;
            }
            case OpKind::AddRow: {
                if (auto* dx = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
                if (auto* db = grad_of(n.inputs[1])) {
                    for (std::size_t r = 0; r < y.rows(); ++r)
                        for (std::size_t c = 0; c < y.cols(); ++c) (*db)[c] += dy[r * y.cols() + c];
                }
                break;
            }
            case OpKind::Mul: {
                const auto a = value(n.inputs[0]).data();
                const auto b = value(n.inputs[1]).data();
                if (auto* da = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i] * b[i];
                if (auto* db = grad_of(n.inputs[1]))
                    for (std::size_t i = 0; i < dy.size(); ++i) (*db)[i] += dy[i] * a[i];
                break;
            }
            case OpKind::Scale: {
                if (auto* dx = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i] * n.scalar;
                break;
            }
            case OpKind::Relu: {
                const auto x = value(n.inputs[0]).data();
                if (auto* dx = grad_of(n.inputs[0]))
                    for (std::size_t i = 0; i < dy.size(); ++i)
                        if (x[i] > 0.0) (*dx)[i] += dy[i];
                break;
            }
            case OpKind::SoftmaxRows: {
                if (auto* dx = grad_of(n.inputs[0])) {
                    const std::size_t cols = y.cols();
                    for (std::size_t r = 0; r < y.rows(); ++r) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * n.saved[r * cols + c];
                        for (std::size_t c = 0; c < cols; ++c)
                            (*dx)[r * cols + c] += n.saved[r * cols + c] * (dy[r * cols + c] - dot);
                    }
                }
                break;
            }
            case OpKind::LayerNorm: {
                const std::size_t rows = y.rows(), cols = y.cols();
                const Tensor& gamma = value(n.inputs[1]);
                const double* xhat = n.saved.data();
                const double* inv = n.saved.data() + rows * cols;
                if (auto* dx = grad_of(n.inputs[0])) {
                    for (std::size_t r = 0; r < rows; ++r) {
                        double mean_d = 0.0, mean_dx = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) {
                            const double d = dy[r * cols + c] * gamma(0, c);
                            mean_d += d;
                            mean_dx += d * xhat[r * cols + c];
                        }
                        mean_d /= static_cast<double>(cols);
                        mean_dx /= static_cast<double>(cols);
                        for (std::size_t c = 0; c < cols; ++c) {
                            const double d = dy[r * cols + c] * gamma(0, c);
                            (*dx)[r * cols + c] += inv[r] * (d - mean_d - xhat[r * cols + c] * mean_dx);
                        }
                    }
                }
                if (auto* dg = grad_of(n.inputs[1]))
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) (*dg)[c] += dy[r * cols + c] * xhat[r * cols + c];
                if (auto* db = grad_of(n.inputs[2]))
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) (*db)[c] += dy[r * cols + c];
                break;
            }
            case OpKind::GatherRows: {
                if (auto* dx = grad_of(n.inputs[0])) {
                    const std::size_t cols = y.cols();
                    for (std::size_t i = 0; i < n.index.size(); ++i)
                        for (std::size_t c = 0; c < cols; ++c) (*dx)[n.index[i] * cols + c] += dy[i * cols + c];
                }
                break;
            }
            case OpKind::Attention: {
                const std::size_t batch = n.index[0], seq = n.index[1], heads = n.index[2];
                const Tensor& tq = value(n.inputs[0]);
                const Tensor& tk = value(n.inputs[1]);
                const Tensor& tv = value(n.inputs[2]);
                const std::size_t d = tq.cols();
                const std::size_t dh = d / heads;
                auto* dq = grad_of(n.inputs[0]);
                auto* dk = grad_of(n.inputs[1]);
                auto* dv = grad_of(n.inputs[2]);
                std::vector<double> dp(seq * seq);
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t base = b * seq;
                    for (std::size_t h = 0; h < heads; ++h) {
                        const std::size_t col = h * dh;
                        const double* p = n.saved.data() + (b * heads + h) * seq * seq;
                        for (std::size_t i = 0; i < seq; ++i) {
                            for (std::size_t j = 0; j < seq; ++j) {
                                double acc = 0.0;
                                for (std::size_t c = 0; c < dh; ++c)
                                    acc += dy[(base + i) * d + col + c] * tv(base + j, col + c);
                                dp[i * seq + j] = acc;
                                if (dv != nullptr) {
                                    const double pij = p[i * seq + j];
                                    for (std::size_t c = 0; c < dh; ++c)
                                        (*dv)[(base + j) * d + col + c] += pij * dy[(base + i) * d + col + c];
                                }
                            }
                        }
                        // dp becomes the score gradient, pre-scaled by 1/sqrt(dh).
                        for (std::size_t i = 0; i < seq; ++i) {
                            double dot = 0.0;
                            for (std::size_t j = 0; j < seq; ++j) dot += p[i * seq + j] * dp[i * seq + j];
                            for (std::size_t j = 0; j < seq; ++j)
                                dp[i * seq + j] = p[i * seq + j] * (dp[i * seq + j] - dot) * n.scalar;
                        }
                        for (std::size_t i = 0; i < seq; ++i) {
                            for (std::size_t j = 0; j < seq; ++j) {
                                const double ds = dp[i * seq + j];
                                if (ds == 0.0) continue;
                                if (dq != nullptr)
                                    for (std::size_t c = 0; c < dh; ++c)
                                        (*dq)[(base + i) * d + col + c] += ds * tk(base + j, col + c);
                                if (dk != nullptr)
                                    for (std::size_t c = 0; c < dh; ++c)
                                        (*dk)[(base + j) * d + col + c] += ds * tq(base + i, col + c);
                            }
                        }
                    }
                }
                break;
            }
            case OpKind::CrossEntropy: {
                if (auto* dx = grad_of(n.inputs[0])) {
                    const Tensor& logits = value(n.inputs[0]);
                    const std::size_t batch = logits.rows(), classes = logits.cols();
                    const double upstream = dy[0] / static_cast<double>(batch);
                    for (std::size_t r = 0; r < batch; ++r) {
                        for (std::size_t c = 0; c < classes; ++c) {
                            const double onehot = (c == n.index[r]) ? 1.0 : 0.0;
                            (*dx)[r * classes + c] += upstream * (n.saved[r * classes + c] - onehot);
                        }
                    }
                }
                break;
            }
            case OpKind::Sum: {
                if (auto* dx = grad_of(n.inputs[0]))
                    for (auto& v : *dx) v += dy[0];
                break;
            }
        }
    }
}

double grad_check(const LossBuilder& build, std::span<Tensor* const> params, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw ConfigError("grad_check eps must lie in (0, 1e-2]");
    for (Tensor* p : params) p->zero_grad();
    {
        Graph g;
        const NodeId loss = build(g);
        g.backward(loss);
    }
    auto evaluate = [&build] {
        Graph g;
        const NodeId loss = build(g);
        return g.scalar(loss);
    };
    double worst = 0.0;
    for (Tensor* p : params) {
        const std::vector<double> analytic(p->grad().begin(), p->grad().end());
        auto data = p->data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double original = data[i];
            data[i] = original + eps;
            const double up = evaluate();
            data[i] = original - eps;
            const double down = evaluate();
            data[i] = original;
            const double numeric = (up - down) / (2.0 * eps);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace fedlora
