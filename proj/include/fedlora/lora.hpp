// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "fedlora/autodiff.hpp"
#include "fedlora/model.hpp"
#include "fedlora/tensor.hpp"

namespace fedlora {

struct LoraConfig {
    std::size_t rank = 4;
    double alpha = 4.0;
    std::vector<Target> targets = {Target::Q, Target::V};
    std::uint64_t seed = 0;

    double scale() const { return alpha / static_cast<double>(rank); }
    /// Checks 1 <= rank < min(d, k) for every targeted matrix of `model`.
    void validate(const ModelConfig& model) const;
};

/// Low-rank update for one frozen weight W0 [d x k]:
///   delta = scale * B * A,  A [r x k],  B [d x r]
///   W     = W0 + delta
struct Adapter {
    std::size_t layer = 0;
    Target target = Target::Q;
    Tensor a;
    Tensor b;
    const Tensor* base = nullptr;
    double scale = 1.0;

    std::size_t rank() const { return a.rows(); }
    std::size_t in_dim() const { return b.rows(); }
    std::size_t out_dim() const { return a.cols(); }
};

Tensor adapter_delta(const Adapter& ad);
Tensor effective_weight(const Adapter& ad);

/// Frozen base encoder plus trainable adapters and classifier head.
///
/// The trainable set, in enumeration order: for each adapter (layer
/// ascending, then target in Q, K, V, O, FF1, FF2 order) A then B, followed
/// by head.weight and head.bias. Flattened row-major, this order defines the
/// TrainableVector exchanged with the server.
///
/// Copies share the immutable base, so cloning a client model costs only the
/// trainable tensors.
class AdaptedModel {
public:
    AdaptedModel(std::shared_ptr<const EncoderModel> base, const LoraConfig& cfg);

    const EncoderModel& base() const { return *base_; }
    std::shared_ptr<const EncoderModel> shared_base() const { return base_; }
    const LoraConfig& config() const { return config_; }

    std::span<Adapter> adapters() { return adapters_; }
    std::span<const Adapter> adapters() const { return adapters_; }
    const Adapter* find(std::size_t layer, Target t) const;

    Tensor& head_weight() { return head_weight_; }
    const Tensor& head_weight() const { return head_weight_; }
    Tensor& head_bias() { return head_bias_; }
    const Tensor& head_bias() const { return head_bias_; }

    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
    void zero_grad();

    /// Logits [batch x classes]. Adapted projections compute
    /// x*W0 + scale * (x*B)*A, so W0 never enters the graph as trainable.
    EncoderPass forward(Graph& g, const TokenBatch& batch, NodeId* logits);
    NodeId forward(Graph& g, const TokenBatch& batch);

private:
    std::shared_ptr<const EncoderModel> base_;
    LoraConfig config_;
    std::vector<Adapter> adapters_;
    Tensor head_weight_;
    Tensor head_bias_;
};

/// A drawn Xavier-uniform from SplitMix64(cfg.seed) in enumeration order,
/// B zero, head copied from the base.
AdaptedModel attach_adapters(std::shared_ptr<const EncoderModel> base, const LoraConfig& cfg);

/// Plain model whose targeted matrices hold W0 + delta and whose head is the
/// trained head.
EncoderModel merge_adapters(const AdaptedModel& am);

struct ParamBreakdown {
    std::size_t adapter_params = 0;   // sum of r * (d + k)
    std::size_t dense_params = 0;     // sum of d * k over the same matrices
    std::size_t head_params = 0;
    std::size_t trainable = 0;        // adapter_params + head_params
    std::size_t total = 0;            // parameters of the equivalent plain model

    /// adapter_params / total
    double adapter_ratio() const;
    /// trainable / total
    double trainable_ratio() const;
};

ParamBreakdown trainable_param_count(const AdaptedModel& am);

using TrainableVector = std::vector<double>;

TrainableVector extract_trainable(const AdaptedModel& am);
/// Throws ProtocolError when the length differs from the trainable count.
void load_trainable(AdaptedModel& am, std::span<const double> values);

/// Adapter checkpoint layout (little-endian):
///   8 bytes magic "FLRADAPT", u32 version (1),
///   u32 rank, f64 alpha, u64 seed, u32 target count, u32 target ids
///   (Q=0 .. FF2=5), u32 adapter count, then per adapter in enumeration
///   order: u32 layer, u32 target, u32 d, u32 k, A doubles, B doubles;
///   then head.weight and head.bias doubles.
void save_adapters(const std::filesystem::path& path, const AdaptedModel& am);
/// Reads adapters saved against the same base architecture.
AdaptedModel load_adapters(const std::filesystem::path& path, std::shared_ptr<const EncoderModel> base);

}  // namespace fedlora
