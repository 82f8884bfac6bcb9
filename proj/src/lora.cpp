// SPDX-License-Identifier: Apache-2.0
#include "fedlora/lora.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "fedlora/errors.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

namespace {

constexpr std::string_view kAdapterMagic = "FLRADAPT";
constexpr std::uint32_t kAdapterVersion = 1;

std::vector<Target> ordered_targets(const std::vector<Target>& targets) {
    std::vector<Target> out;
    for (Target t : kAllTargets)
        if (std::find(targets.begin(), targets.end(), t) != targets.end()) out.push_back(t);
    return out;
}

}  // namespace

void LoraConfig::validate(const ModelConfig& model) const {
    if (!(alpha > 0.0)) throw ConfigError("lora.alpha must be positive");
    if (rank < 1) throw ConfigError("lora.rank must be at least 1");
    if (ordered_targets(targets).size() != targets.size()) throw ConfigError("lora.targets contains duplicates");
    for (Target t : targets) {
        const std::size_t d = t == Target::FF2 ? model.ff_dim : model.d_model;
        const std::size_t k = t == Target::FF1 ? model.ff_dim : model.d_model;
        if (rank >= std::min(d, k)) {
            throw ConfigError("lora.rank " + std::to_string(rank) + " must be below min(d, k) = " +
                              std::to_string(std::min(d, k)) + " for target " + std::string(to_string(t)));
        }
    }
}

Tensor adapter_delta(const Adapter& ad) {
    Tensor out(ad.in_dim(), ad.out_dim());
    for (std::size_t i = 0; i < ad.in_dim(); ++i)
        for (std::size_t r = 0; r < ad.rank(); ++r) {
            const double bir = ad.b(i, r) * ad.scale;
            for (std::size_t j = 0; j < ad.out_dim(); ++j) out(i, j) += bir * ad.a(r, j);
        }
    return out;
}

Tensor effective_weight(const Adapter& ad) {
    Tensor w = *ad.base;
    w.clear_grad();
    const Tensor delta = adapter_delta(ad);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] += delta.data()[i];
    return w;
}

AdaptedModel::AdaptedModel(std::shared_ptr<const EncoderModel> base, const LoraConfig& cfg)
    : base_(std::move(base)), config_(cfg) {
    if (!base_) throw ConfigError("adapted model needs a base model");
    config_.validate(base_->config);
    config_.targets = ordered_targets(config_.targets);
    SplitMix64 rng(config_.seed);
    for (std::size_t l = 0; l < base_->layers.size(); ++l) {
        for (Target t : config_.targets) {
            Adapter ad;
            ad.layer = l;
            ad.target = t;
            ad.base = &base_->layers[l].projection(t);
            ad.scale = config_.scale();
            ad.a = Tensor(config_.rank, ad.base->cols());
            xavier_uniform(ad.a, rng);
            ad.b = Tensor(ad.base->rows(), config_.rank);
            adapters_.push_back(std::move(ad));
        }
    }
    head_weight_ = base_->head_weight;
    head_bias_ = base_->head_bias;
    head_weight_.clear_grad();
    head_bias_.clear_grad();
}

const Adapter* AdaptedModel::find(std::size_t layer, Target t) const {
    for (const auto& ad : adapters_)
        if (ad.layer == layer && ad.target == t) return &ad;
    return nullptr;
}

std::vector<Tensor*> AdaptedModel::trainable() {
    std::vector<Tensor*> out;
    for (auto& ad : adapters_) {
        out.push_back(&ad.a);
        out.push_back(&ad.b);
    }
    out.push_back(&head_weight_);
    out.push_back(&head_bias_);
    return out;
}

std::vector<const Tensor*> AdaptedModel::trainable() const {
    std::vector<const Tensor*> out;
    for (const auto& ad : adapters_) {
        out.push_back(&ad.a);
        out.push_back(&ad.b);
    }
    out.push_back(&head_weight_);
    out.push_back(&head_bias_);
    return out;
}

void AdaptedModel::zero_grad() {
    for (Tensor* t : trainable()) t->zero_grad();
}

EncoderPass AdaptedModel::forward(Graph& g, const TokenBatch& batch, NodeId* logits) {
    // Adapter lookup by (layer, target) in a dense table.
    std::vector<Adapter*> table(base_->layers.size() * std::size(kAllTargets), nullptr);
    for (auto& ad : adapters_) table[ad.layer * std::size(kAllTargets) + static_cast<std::size_t>(ad.target)] = &ad;

    const ProjectionFn project = [&](Graph& gr, std::size_t layer, Target t, NodeId x) {
        const Tensor& w0 = base_->layers[layer].projection(t);
        const NodeId frozen = matmul(gr, x, gr.constant(w0));
        Adapter* ad = table[layer * std::size(kAllTargets) + static_cast<std::size_t>(t)];
        if (ad == nullptr) return frozen;
        const NodeId low = matmul(gr, matmul(gr, x, gr.param(ad->b)), gr.param(ad->a));
        return add(gr, frozen, ad->scale == 1.0 ? low : scale(gr, low, ad->scale));
    };
    EncoderPass pass = encode(g, *base_, batch, project);
    const NodeId out = add_row(g, matmul(g, pass.cls, g.param(head_weight_)), g.param(head_bias_));
    if (logits != nullptr) *logits = out;
    return pass;
}

NodeId AdaptedModel::forward(Graph& g, const TokenBatch& batch) {
    NodeId logits = 0;
    forward(g, batch, &logits);
    return logits;
}

AdaptedModel attach_adapters(std::shared_ptr<const EncoderModel> base, const LoraConfig& cfg) {
    return AdaptedModel(std::move(base), cfg);
}

EncoderModel merge_adapters(const AdaptedModel& am) {
    EncoderModel merged = am.base();
    for (const auto& ad : am.adapters()) merged.layers[ad.layer].projection(ad.target) = effective_weight(ad);
    merged.head_weight = am.head_weight();
    merged.head_bias = am.head_bias();
    merged.head_weight.clear_grad();
    merged.head_bias.clear_grad();
    return merged;
}

double ParamBreakdown::adapter_ratio() const {
    return total == 0 ? 0.0 : static_cast<double>(adapter_params) / static_cast<double>(total);
}

double ParamBreakdown::trainable_ratio() const {
    return total == 0 ? 0.0 : static_cast<double>(trainable) / static_cast<double>(total);
}

ParamBreakdown trainable_param_count(const AdaptedModel& am) {
    ParamBreakdown p;
    for (const auto& ad : am.adapters()) {
        p.adapter_params += ad.rank() * (ad.in_dim() + ad.out_dim());
        p.dense_params += ad.in_dim() * ad.out_dim();
    }
    p.head_params = am.head_weight().size() + am.head_bias().size();
    p.trainable = p.adapter_params + p.head_params;
    p.total = am.base().parameter_count();
    return p;
}

TrainableVector extract_trainable(const AdaptedModel& am) {
    TrainableVector out;
    out.reserve(trainable_param_count(am).trainable);
    for (const Tensor* t : am.trainable()) out.insert(out.end(), t->data().begin(), t->data().end());
    return out;
}

void load_trainable(AdaptedModel& am, std::span<const double> values) {
    const std::size_t expected = trainable_param_count(am).trainable;
    if (values.size() != expected) {
        throw ProtocolError("trainable vector has " + std::to_string(values.size()) + " entries, model expects " +
                            std::to_string(expected));
    }
    std::size_t pos = 0;
    for (Tensor* t : am.trainable()) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), t->size(), t->data().begin());
        pos += t->size();
    }
}

void save_adapters(const std::filesystem::path& path, const AdaptedModel& am) {
    detail::BinaryWriter w(path);
    const auto& c = am.config();
    w.magic(kAdapterMagic);
    w.u32(kAdapterVersion);
    w.u32(static_cast<std::uint32_t>(c.rank));
    w.f64(c.alpha);
    w.u64(c.seed);
    w.u32(static_cast<std::uint32_t>(c.targets.size()));
    for (Target t : c.targets) w.u32(static_cast<std::uint32_t>(t));
    w.u32(static_cast<std::uint32_t>(am.adapters().size()));
    for (const auto& ad : am.adapters()) {
        w.u32(static_cast<std::uint32_t>(ad.layer));
        w.u32(static_cast<std::uint32_t>(ad.target));
        w.u32(static_cast<std::uint32_t>(ad.in_dim()));
        w.u32(static_cast<std::uint32_t>(ad.out_dim()));
        w.tensor(ad.a);
        w.tensor(ad.b);
    }
    w.tensor(am.head_weight());
    w.tensor(am.head_bias());
    w.finish();
}

AdaptedModel load_adapters(const std::filesystem::path& path, std::shared_ptr<const EncoderModel> base) {
    detail::BinaryReader r(path);
    r.expect_magic(kAdapterMagic);
    const auto version = r.u32();
    if (version != kAdapterVersion) throw SchemaError("unsupported adapter checkpoint version " + std::to_string(version));
    LoraConfig c;
    c.rank = r.u32();
    c.alpha = r.f64();
    c.seed = r.u64();
    const auto n_targets = r.u32();
    c.targets.clear();
    for (std::uint32_t i = 0; i < n_targets; ++i) {
        const auto t = r.u32();
        if (t >= std::size(kAllTargets)) throw SchemaError("bad adapter target id " + std::to_string(t));
        c.targets.push_back(kAllTargets[t]);
    }
    AdaptedModel am(std::move(base), c);
    const auto count = r.u32();
    if (count != am.adapters().size()) throw SchemaError("adapter count does not match the base model");
    for (auto& ad : am.adapters()) {
        const auto layer = r.u32();
        const auto target = r.u32();
        const auto d = r.u32();
        const auto k = r.u32();
        if (layer != ad.layer || target != static_cast<std::uint32_t>(ad.target) || d != ad.in_dim() ||
            k != ad.out_dim()) {
            throw SchemaError("adapter checkpoint layout does not match the base model");
        }
        r.tensor(ad.a);
        r.tensor(ad.b);
    }
    r.tensor(am.head_weight());
    r.tensor(am.head_bias());
    r.expect_end();
    return am;
}

}  // namespace fedlora
