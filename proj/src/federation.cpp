// SPDX-License-Identifier: Apache-2.0
#include "fedlora/federation.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <memory>
#include <numeric>
#include <thread>

#include "fedlora/errors.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

namespace {

// Tags for derive_seed so unrelated streams never collide.
constexpr std::uint64_t kShuffleTag = 0x5348554646ULL;  // "SHUFF"
constexpr std::uint64_t kSplitTag = 0x53504c4954ULL;    // "SPLIT"

std::uint64_t shard_split_seed(const FedConfig& cfg, std::size_t client_id) {
    return derive_seed(cfg.seed, {kSplitTag, client_id});
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void fill_global_eval(RoundReport& report, AdaptedModel& model, const Vocab& vocab, std::span<const Record> eval) {
    if (eval.empty()) return;
    const EvalResult r = evaluate(model, vocab, eval);
    report.eval_accuracy = r.accuracy;
    report.eval_f1 = r.f1;
    report.eval_loss = r.loss;
}

void fill_client_means(RoundReport& report) {
    double acc = 0.0, f1 = 0.0;
    std::size_t n = 0;
    for (const auto& c : report.clients) {
        if (!c.ok || !c.eval_accuracy) continue;
        acc += *c.eval_accuracy;
        f1 += *c.eval_f1;
        ++n;
    }
    if (n > 0) {
        report.client_eval_accuracy = acc / static_cast<double>(n);
        report.client_eval_f1 = f1 / static_cast<double>(n);
    }
}

ClientReport to_report(const ClientResult& r) {
    ClientReport c;
    c.client_id = r.client_id;
    c.ok = true;
    c.final_loss = r.final_loss;
    c.train_size = r.train_size;
    if (r.local_eval) {
        c.eval_accuracy = r.local_eval->accuracy;
        c.eval_f1 = r.local_eval->f1;
    }
    return c;
}

}  // namespace

std::string to_string(Aggregation a) {
    return a == Aggregation::UniformMean ? "uniform_mean" : "weighted_by_n";
}

Aggregation parse_aggregation(std::string_view name) {
    if (name == "uniform_mean") return Aggregation::UniformMean;
    if (name == "weighted_by_n") return Aggregation::WeightedByCount;
    throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected uniform_mean or weighted_by_n)");
}

void FedConfig::validate() const {
    if (clients < 1) throw ConfigError("fed.clients must be at least 1");
    if (rounds < 1) throw ConfigError("fed.rounds must be at least 1");
    if (local_epochs < 1) throw ConfigError("fed.local_epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("fed.batch_size must be at least 1");
    if (!(eta >= 0.0)) throw ConfigError("fed.eta must be non-negative");
    if (threads < 1) throw ConfigError("fed.threads must be at least 1");
}

CommCost comm_cost(const FedConfig& cfg, std::size_t n_trainable) {
    const std::uint64_t per_client = static_cast<std::uint64_t>(n_trainable) * kWireBytesPerParam;
    return {cfg.clients * per_client, cfg.clients * per_client};
}

TrainableVector fedavg(std::span<const TrainableVector> thetas, std::span<const double> weights) {
    if (thetas.empty()) throw ProtocolError("fedavg needs at least one client vector");
    const std::size_t n = thetas.front().size();
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        if (thetas[k].size() != n) {
            throw ProtocolError("client " + std::to_string(k) + " sent " + std::to_string(thetas[k].size()) +
                                " parameters, expected " + std::to_string(n));
        }
    }
    const bool weighted = !weights.empty();
    if (weighted) {
        if (weights.size() != thetas.size()) throw ProtocolError("fedavg weight count differs from client count");
        for (double w : weights)
            if (!(w > 0.0)) throw ProtocolError("fedavg weights must be positive");
    }
    TrainableVector mean = thetas.front();
    double seen = weighted ? weights[0] : 1.0;
    for (std::size_t k = 1; k < thetas.size(); ++k) {
        const double w = weighted ? weights[k] : 1.0;
        seen += w;
        const double step = w / seen;
        const auto& theta = thetas[k];
        for (std::size_t i = 0; i < n; ++i) mean[i] += step * (theta[i] - mean[i]);
    }
    return mean;
}

void sgd_step(std::span<Tensor* const> params, double eta) {
    for (Tensor* p : params) {
        if (!p->has_grad()) continue;
        auto data = p->data();
        const auto grad = p->grad();
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= eta * grad[i];
    }
}

EvalResult evaluate(AdaptedModel& model, const Vocab& vocab, std::span<const Record> records, std::size_t batch_size) {
    if (records.empty()) throw DataError("cannot evaluate on an empty record set");
    std::vector<int> preds, golds;
    preds.reserve(records.size());
    golds.reserve(records.size());
    double loss = 0.0;
    const std::size_t max_len = model.base().config.max_seq_len;
    for (std::size_t start = 0; start < records.size(); start += batch_size) {
        const auto chunk = records.subspan(start, std::min(batch_size, records.size() - start));
        const TokenBatch batch = make_batch(chunk, vocab, max_len);
        Graph g;
        const NodeId logits = model.forward(g, batch);
        const NodeId l = cross_entropy(g, logits, batch.labels);
        loss += g.scalar(l) * static_cast<double>(chunk.size());
        const auto p = argmax_rows(g.value(logits));
        preds.insert(preds.end(), p.begin(), p.end());
        golds.insert(golds.end(), batch.labels.begin(), batch.labels.end());
    }
    EvalResult r;
    r.confusion = confusion(preds, golds);
    r.accuracy = accuracy(r.confusion);
    r.f1 = f1_binary(r.confusion);
    r.loss = loss / static_cast<double>(records.size());
    return r;
}

ClientResult client_update(const TrainingContext& ctx, std::span<const double> snapshot, const ClientShard& shard,
                           const FedConfig& cfg, std::size_t round) {
    cfg.validate();
    if (shard.train.empty()) {
        throw ClientError("client " + std::to_string(shard.client_id) + " has no training records");
    }
    AdaptedModel model = ctx.prototype;
    load_trainable(model, snapshot);

    const std::size_t max_len = model.base().config.max_seq_len;
    std::vector<EncodedRecord> encoded;
    encoded.reserve(shard.train.size());
    for (const auto& r : shard.train) encoded.push_back(encode_record(r, ctx.vocab, max_len));

    ClientResult result;
    result.client_id = shard.client_id;
    result.train_size = shard.train.size();
    const auto params = model.trainable();
    std::vector<std::size_t> order(encoded.size());
    std::vector<const EncodedRecord*> items;
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        SplitMix64 rng(derive_seed(cfg.seed, {kShuffleTag, shard.client_id, round, epoch}));
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            items.clear();
            for (std::size_t i = start; i < end; ++i) items.push_back(&encoded[order[i]]);
            const TokenBatch batch = collate(items);

            model.zero_grad();
            Graph g;
            const NodeId logits = model.forward(g, batch);
            const NodeId loss = cross_entropy(g, logits, batch.labels);
            g.backward(loss);
            sgd_step(params, cfg.eta);
            epoch_loss += g.scalar(loss) * static_cast<double>(end - start);
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    result.final_loss = result.epoch_losses.back();
    for (Tensor* p : params) p->clear_grad();
    result.theta = extract_trainable(model);
    if (!shard.eval.empty()) result.local_eval = evaluate(model, ctx.vocab, shard.eval);
    return result;
}

GlobalState run_round(const GlobalState& state, std::span<const ClientShard> shards, const FedConfig& cfg,
                      const TrainingContext& ctx, std::span<const Record> global_eval) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::size_t round = state.round;
    const std::size_t k = shards.size();
    if (k == 0) throw RoundError("round " + std::to_string(round + 1) + " has no clients");

    std::vector<std::optional<ClientResult>> results(k);
    std::vector<std::string> failures(k);
    std::vector<std::exception_ptr> fatal(k);
    auto work = [&](std::size_t i) {
        try {
            results[i] = client_update(ctx, state.theta, shards[i], cfg, round);
        } catch (const Error& e) {
            failures[i] = e.what();
        } catch (...) {
            fatal[i] = std::current_exception();
        }
    };
    const std::size_t workers = std::min(cfg.threads, k);
    if (workers <= 1) {
        for (std::size_t i = 0; i < k; ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < k; i += workers) work(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    for (const auto& f : fatal)
        if (f) std::rethrow_exception(f);

    // Aggregate in client-id order regardless of shard order or scheduling.
    std::vector<std::size_t> by_id(k);
    std::iota(by_id.begin(), by_id.end(), 0);
    std::sort(by_id.begin(), by_id.end(),
              [&](std::size_t a, std::size_t b) { return shards[a].client_id < shards[b].client_id; });

    RoundReport report;
    report.round = round + 1;
    std::vector<TrainableVector> thetas;
    std::vector<double> weights;
    for (std::size_t i : by_id) {
        if (results[i]) {
            report.clients.push_back(to_report(*results[i]));
            thetas.push_back(std::move(results[i]->theta));
            weights.push_back(static_cast<double>(results[i]->train_size));
        } else {
            ClientReport c;
            c.client_id = shards[i].client_id;
            c.error = failures[i];
            report.clients.push_back(std::move(c));
        }
    }
    if (thetas.empty()) throw RoundError("round " + std::to_string(round + 1) + ": every client failed");

    GlobalState next;
    next.theta = cfg.aggregation == Aggregation::WeightedByCount ? fedavg(thetas, weights) : fedavg(thetas);
    next.round = round + 1;
    next.history = state.history;

    const std::size_t n_trainable = state.theta.size();
    FedConfig sent = cfg;
    sent.clients = k;
    FedConfig received = cfg;
    received.clients = thetas.size();
    report.downlink_bytes = comm_cost(sent, n_trainable).downlink_bytes;
    report.uplink_bytes = comm_cost(received, n_trainable).uplink_bytes;

    AdaptedModel global = ctx.prototype;
    load_trainable(global, next.theta);
    fill_global_eval(report, global, ctx.vocab, global_eval);
    fill_client_means(report);
    report.wall_time_s = seconds_since(start);
    next.history.push_back(std::move(report));
    return next;
}

std::vector<ClientShard> make_client_shards(const RunSpec& spec, std::span<const Record> pool) {
    PartitionSpec partition = spec.partition;
    if (partition.clients == 0) partition.clients = spec.fed.clients;
    if (partition.clients < spec.fed.clients) {
        throw ConfigError("partition.clients (" + std::to_string(partition.clients) + ") is below fed.clients (" +
                          std::to_string(spec.fed.clients) + ")");
    }
    auto parts = partition_clients(pool, partition);
    std::vector<ClientShard> shards;
    shards.reserve(spec.fed.clients);
    for (std::size_t c = 0; c < spec.fed.clients; ++c) {
        shards.push_back(make_shard(c, parts[c], spec.eval_frac, shard_split_seed(spec.fed, c)));
    }
    return shards;
}

namespace {

TrainingContext make_context(const RunSpec& spec, const Vocab& vocab) {
    spec.fed.validate();
    if (vocab.size() > spec.model.vocab_size) {
        throw ConfigError("vocabulary has " + std::to_string(vocab.size()) + " entries but model.vocab_size is " +
                          std::to_string(spec.model.vocab_size));
    }
    auto base = std::make_shared<const EncoderModel>(init_model(spec.model));
    return TrainingContext{attach_adapters(std::move(base), spec.lora), vocab};
}

}  // namespace

RunResult run_federated(const RunSpec& spec, const Vocab& vocab, const ExperimentData& data,
                        const RoundCallback& on_round) {
    const TrainingContext ctx = make_context(spec, vocab);
    const auto shards = make_client_shards(spec, data.pool);
    GlobalState state;
    state.theta = extract_trainable(ctx.prototype);
    for (std::size_t r = 0; r < spec.fed.rounds; ++r) {
        state = run_round(state, shards, spec.fed, ctx, data.global_eval);
        if (on_round) on_round(state.history.back());
    }
    AdaptedModel final_model = ctx.prototype;
    load_trainable(final_model, state.theta);
    const ParamBreakdown params = trainable_param_count(final_model);
    return RunResult{std::move(state), std::move(final_model), params};
}

RunResult run_centralized(const RunSpec& spec, const Vocab& vocab, const ExperimentData& data,
                          const RoundCallback& on_round) {
    const TrainingContext ctx = make_context(spec, vocab);
    const ClientShard shard = make_shard(0, data.pool, spec.eval_frac, shard_split_seed(spec.fed, 0));
    GlobalState state;
    state.theta = extract_trainable(ctx.prototype);
    for (std::size_t r = 0; r < spec.fed.rounds; ++r) {
        const auto start = std::chrono::steady_clock::now();
        ClientResult local = client_update(ctx, state.theta, shard, spec.fed, r);
        RoundReport report;
        report.round = r + 1;
        report.clients.push_back(to_report(local));
        state.theta = std::move(local.theta);
        state.round = r + 1;
        AdaptedModel global = ctx.prototype;
        load_trainable(global, state.theta);
        fill_global_eval(report, global, ctx.vocab, data.global_eval);
        fill_client_means(report);
        report.wall_time_s = seconds_since(start);
        state.history.push_back(std::move(report));
        if (on_round) on_round(state.history.back());
    }
    AdaptedModel final_model = ctx.prototype;
    load_trainable(final_model, state.theta);
    const ParamBreakdown params = trainable_param_count(final_model);
    return RunResult{std::move(state), std::move(final_model), params};
}

}  // namespace fedlora
