// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fedlora/autodiff.hpp"
#include "fedlora/rng.hpp"
#include "fedlora/tensor.hpp"
#include "fedlora/vocab.hpp"

namespace fedlora {

struct ModelConfig {
    std::size_t vocab_size = 256;
    std::size_t d_model = 32;
    std::size_t n_heads = 2;
    std::size_t n_layers = 2;
    std::size_t ff_dim = 64;
    std::size_t max_seq_len = 32;
    std::size_t n_classes = 2;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Projection matrices inside one encoder layer that can carry an adapter.
enum class Target { Q, K, V, O, FF1, FF2 };

inline constexpr Target kAllTargets[] = {Target::Q, Target::K, Target::V, Target::O, Target::FF1, Target::FF2};

std::string_view to_string(Target t);
Target parse_target(std::string_view name);

struct LayerWeights {
    Tensor wq, wk, wv, wo;    // [d_model x d_model]
    Tensor ln1_gamma, ln1_beta;
    Tensor ff1;               // [d_model x ff_dim]
    Tensor ff2;               // [ff_dim x d_model]
    Tensor ln2_gamma, ln2_beta;

    const Tensor& projection(Target t) const;
    Tensor& projection(Target t);
};

inline constexpr double kLayerNormEps = 1e-5;

/// Post-LN transformer encoder with a classifier head on the CLS position.
/// All weights multiply from the right: y = x * W with W shaped [in x out].
///
/// Parameter order (used by init, checkpoints and parameter counts):
///   token_embedding [vocab x d], position_embedding [max_seq_len x d],
///   then per layer: wq, wk, wv, wo, ln1.gamma, ln1.beta, ff1, ff2,
///   ln2.gamma, ln2.beta; then head.weight [d x classes], head.bias [1 x classes].
struct EncoderModel {
    ModelConfig config;
    Tensor token_embedding;
    Tensor position_embedding;
    std::vector<LayerWeights> layers;
    Tensor head_weight;
    Tensor head_bias;

    struct NamedTensor {
        std::string name;
        const Tensor* tensor;
    };
    std::vector<NamedTensor> parameters() const;
    std::vector<Tensor*> parameter_tensors();
    std::size_t parameter_count() const;

    /// Forward with every weight entering as a constant.
    NodeId forward(Graph& g, const TokenBatch& batch) const;
};

/// Xavier-uniform matrices, unit gamma, zero beta and bias, drawn from
/// SplitMix64(cfg.seed) in parameter order.
EncoderModel init_model(const ModelConfig& cfg);

/// Closed-form parameter count for a config.
std::size_t parameter_count(const ModelConfig& cfg);

/// Uniform(-s, s) fill with s = sqrt(6 / (rows + cols)).
void xavier_uniform(Tensor& t, SplitMix64& rng);

/// Maps one projection of one layer to a graph node: receives the input
/// activations and returns x * W (possibly with an adapter term).
using ProjectionFn = std::function<NodeId(Graph&, std::size_t layer, Target, NodeId x)>;

struct EncoderPass {
    NodeId cls;                          // [batch x d_model] CLS representations
    std::vector<NodeId> attention;       // one Attention node per layer
};

/// Embeddings, then per layer: masked multi-head self-attention, residual +
/// layer norm, ReLU feed-forward, residual + layer norm. Throws DataError
/// when the batch is longer than max_seq_len.
EncoderPass encode(Graph& g, const EncoderModel& model, const TokenBatch& batch, const ProjectionFn& project);

/// Class with the largest logit per row; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

/// Checkpoint layout (little-endian):
///   8 bytes magic "FLRMODEL", u32 version (1),
///   u32 vocab_size, d_model, n_heads, n_layers, ff_dim, max_seq_len, n_classes,
///   u64 seed, then every parameter's doubles in parameter order.
void save_model(const std::filesystem::path& path, const EncoderModel& model);
EncoderModel load_model(const std::filesystem::path& path);

}  // namespace fedlora
