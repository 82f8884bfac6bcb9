// SPDX-License-Identifier: Apache-2.0
#include "fedlora/model.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "fedlora/errors.hpp"

namespace fedlora {

namespace {

constexpr std::string_view kModelMagic = "FLRMODEL";
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < Vocab::kReserved) throw ConfigError("model.vocab_size must be at least 3");
    if (d_model == 0) throw ConfigError("model.d_model must be positive");
    if (n_heads == 0 || d_model % n_heads != 0) {
        throw ConfigError("model.d_model (" + std::to_string(d_model) + ") must be divisible by model.n_heads (" +
                          std::to_string(n_heads) + ")");
    }
    if (n_layers == 0) throw ConfigError("model.n_layers must be positive");
    if (ff_dim == 0) throw ConfigError("model.ff_dim must be positive");
    if (max_seq_len < 1) throw ConfigError("model.max_seq_len must be at least 1");
    if (n_classes != 2) throw ConfigError("model.n_classes must be 2 for binary stress classification");
}

std::string_view to_string(Target t) {
    switch (t) {
        case Target::Q: return "Q";
        case Target::K: return "K";
        case Target::V: return "V";
        case Target::O: return "O";
        case Target::FF1: return "FF1";
        case Target::FF2: return "FF2";
    }
    return "?";
}

Target parse_target(std::string_view name) {
    for (Target t : kAllTargets)
        if (to_string(t) == name) return t;
    throw ConfigError("unknown adapter target '" + std::string(name) + "' (expected Q, K, V, O, FF1 or FF2)");
}

const Tensor& LayerWeights::projection(Target t) const {
    switch (t) {
        case Target::Q: return wq;
        case Target::K: return wk;
        case Target::V: return wv;
        case Target::O: return wo;
        case Target::FF1: return ff1;
        case Target::FF2: return ff2;
    }
    return wq;
}

Tensor& LayerWeights::projection(Target t) {
    return const_cast<Tensor&>(std::as_const(*this).projection(t));
}

namespace {

template <typename Model, typename Fn>
void visit_parameters(Model& m, Fn&& fn) {
    fn(std::string("token_embedding"), m.token_embedding);
    fn(std::string("position_embedding"), m.position_embedding);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& L = m.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        fn(p + "wq", L.wq);
        fn(p + "wk", L.wk);
        fn(p + "wv", L.wv);
        fn(p + "wo", L.wo);
        fn(p + "ln1.gamma", L.ln1_gamma);
        fn(p + "ln1.beta", L.ln1_beta);
        fn(p + "ff1", L.ff1);
        fn(p + "ff2", L.ff2);
        fn(p + "ln2.gamma", L.ln2_gamma);
        fn(p + "ln2.beta", L.ln2_beta);
    }
    fn(std::string("head.weight"), m.head_weight);
    fn(std::string("head.bias"), m.head_bias);
}

}  // namespace

std::vector<EncoderModel::NamedTensor> EncoderModel::parameters() const {
    std::vector<NamedTensor> out;
    visit_parameters(*this, [&out](std::string name, const Tensor& t) { out.push_back({std::move(name), &t}); });
    return out;
}

std::vector<Tensor*> EncoderModel::parameter_tensors() {
    std::vector<Tensor*> out;
    visit_parameters(*this, [&out](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::size_t EncoderModel::parameter_count() const {
    std::size_t total = 0;
    for (const auto& p : parameters()) total += p.tensor->size();
    return total;
}

std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t per_layer = 4 * c.d_model * c.d_model + 2 * c.d_model * c.ff_dim + 4 * c.d_model;
    return c.vocab_size * c.d_model + c.max_seq_len * c.d_model + c.n_layers * per_layer +
           c.d_model * c.n_classes + c.n_classes;
}

void xavier_uniform(Tensor& t, SplitMix64& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    for (double& v : t.data()) v = rng.uniform(-s, s);
}

EncoderModel init_model(const ModelConfig& cfg) {
    cfg.validate();
    SplitMix64 rng(cfg.seed);
    const std::size_t d = cfg.d_model;
    auto matrix = [&rng](std::size_t rows, std::size_t cols) {
        Tensor t(rows, cols);
        xavier_uniform(t, rng);
        return t;
    };
    auto ones = [](std::size_t cols) { return Tensor(1, cols, std::vector<double>(cols, 1.0)); };

    EncoderModel m;
    m.config = cfg;
    m.token_embedding = matrix(cfg.vocab_size, d);
    m.position_embedding = matrix(cfg.max_seq_len, d);
    m.layers.resize(cfg.n_layers);
    for (auto& L : m.layers) {
        L.wq = matrix(d, d);
        L.wk = matrix(d, d);
        L.wv = matrix(d, d);
        L.wo = matrix(d, d);
        L.ln1_gamma = ones(d);
        L.ln1_beta = Tensor(1, d);
        L.ff1 = matrix(d, cfg.ff_dim);
        L.ff2 = matrix(cfg.ff_dim, d);
        L.ln2_gamma = ones(d);
        L.ln2_beta = Tensor(1, d);
    }
    m.head_weight = matrix(d, cfg.n_classes);
    m.head_bias = Tensor(1, cfg.n_classes);
    return m;
}

EncoderPass encode(Graph& g, const EncoderModel& model, const TokenBatch& batch, const ProjectionFn& project) {
    const ModelConfig& cfg = model.config;
    if (batch.seq_len > cfg.max_seq_len) {
        throw DataError("sequence length " + std::to_string(batch.seq_len) + " exceeds max_seq_len " +
                        std::to_string(cfg.max_seq_len));
    }
    const std::size_t rows = batch.batch * batch.seq_len;
    if (batch.ids.size() != rows || batch.mask.size() != rows) throw DimensionError("token batch is not rectangular");

    std::vector<std::size_t> token_rows(rows), position_rows(rows), cls_rows(batch.batch);
    for (std::size_t i = 0; i < rows; ++i) {
        const int id = batch.ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw DataError("token id " + std::to_string(id) + " outside vocab_size " + std::to_string(cfg.vocab_size));
        }
        token_rows[i] = static_cast<std::size_t>(id);
        position_rows[i] = i % batch.seq_len;
    }
    for (std::size_t b = 0; b < batch.batch; ++b) cls_rows[b] = b * batch.seq_len;

    NodeId x = add(g, gather_rows(g, g.constant(model.token_embedding), token_rows),
                   gather_rows(g, g.constant(model.position_embedding), position_rows));
    EncoderPass pass;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& L = model.layers[l];
        const NodeId q = project(g, l, Target::Q, x);
        const NodeId k = project(g, l, Target::K, x);
        const NodeId v = project(g, l, Target::V, x);
        const NodeId attn = attention(g, q, k, v, batch.mask, batch.batch, batch.seq_len, cfg.n_heads);
        pass.attention.push_back(attn);
        const NodeId o = project(g, l, Target::O, attn);
        x = layer_norm(g, add(g, x, o), g.constant(L.ln1_gamma), g.constant(L.ln1_beta), kLayerNormEps);
        const NodeId hidden = relu(g, project(g, l, Target::FF1, x));
        const NodeId ff = project(g, l, Target::FF2, hidden);
        x = layer_norm(g, add(g, x, ff), g.constant(L.ln2_gamma), g.constant(L.ln2_beta), kLayerNormEps);
    }
    pass.cls = gather_rows(g, x, cls_rows);
    return pass;
}

NodeId EncoderModel::forward(Graph& g, const TokenBatch& batch) const {
    const ProjectionFn plain = [this](Graph& gr, std::size_t layer, Target t, NodeId x) {
        return matmul(gr, x, gr.constant(layers[layer].projection(t)));
    };
    const EncoderPass pass = encode(g, *this, batch, plain);
    return add_row(g, matmul(g, pass.cls, g.constant(head_weight)), g.constant(head_bias));
}

std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows(), 0);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, best)) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

void save_model(const std::filesystem::path& path, const EncoderModel& model) {
    detail::BinaryWriter w(path);
    const auto& c = model.config;
    w.magic(kModelMagic);
    w.u32(kModelVersion);
    for (std::size_t v : {c.vocab_size, c.d_model, c.n_heads, c.n_layers, c.ff_dim, c.max_seq_len, c.n_classes})
        w.u32(static_cast<std::uint32_t>(v));
    w.u64(c.seed);
    for (const auto& p : model.parameters()) w.tensor(*p.tensor);
    w.finish();
}

EncoderModel load_model(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    r.expect_magic(kModelMagic);
    const auto version = r.u32();
    if (version != kModelVersion) throw SchemaError("unsupported model checkpoint version " + std::to_string(version));
    ModelConfig c;
    c.vocab_size = r.u32();
    c.d_model = r.u32();
    c.n_heads = r.u32();
    c.n_layers = r.u32();
    c.ff_dim = r.u32();
    c.max_seq_len = r.u32();
    c.n_classes = r.u32();
    c.seed = r.u64();
    EncoderModel m = init_model(c);
    for (Tensor* t : m.parameter_tensors()) r.tensor(*t);
    r.expect_end();
    return m;
}

}  // namespace fedlora
