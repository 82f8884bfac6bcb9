// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedlora/data.hpp"
#include "fedlora/lora.hpp"
#include "fedlora/metrics.hpp"
#include "fedlora/model.hpp"
#include "fedlora/vocab.hpp"

namespace fedlora {

enum class Aggregation { UniformMean, WeightedByCount };

std::string to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

struct FedConfig {
    std::size_t clients = 3;       // K
    std::size_t rounds = 5;        // R
    std::size_t local_epochs = 2;  // E
    double eta = 0.1;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    Aggregation aggregation = Aggregation::UniformMean;
    std::size_t threads = 1;       // 1 = sequential

    void validate() const;
};

/// Bytes per parameter on the simulated wire (single precision).
inline constexpr std::uint64_t kWireBytesPerParam = 4;

struct CommCost {
    std::uint64_t uplink_bytes = 0;
    std::uint64_t downlink_bytes = 0;
};

/// Per round: every client downloads and uploads n_trainable parameters.
CommCost comm_cost(const FedConfig& cfg, std::size_t n_trainable);

/// Uniform mode (no weights): elementwise mean. Weighted mode:
/// sum(w_k * theta_k) / sum(w_k). Accumulated as a running mean in index
/// order, so identical inputs reproduce themselves exactly.
TrainableVector fedavg(std::span<const TrainableVector> thetas, std::span<const double> weights = {});

/// theta <- theta - eta * grad for every tensor.
void sgd_step(std::span<Tensor* const> params, double eta);

struct EvalResult {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    double f1 = 0.0;
    double loss = 0.0;
};

EvalResult evaluate(AdaptedModel& model, const Vocab& vocab, std::span<const Record> records,
                    std::size_t batch_size = 64);

/// Read-only state shared by every client: model structure (with the frozen
/// base) and the tokenizer.
struct TrainingContext {
    AdaptedModel prototype;
    Vocab vocab;
};

struct ClientResult {
    std::size_t client_id = 0;
    TrainableVector theta;
    std::vector<double> epoch_losses;  // mean train loss per local epoch
    double final_loss = 0.0;           // last epoch
    std::size_t train_size = 0;
    std::optional<EvalResult> local_eval;
};

/// Local training from `snapshot`: for each epoch, shuffle the train split
/// with a seed derived from (fed seed, client id, round, epoch), then plain
/// SGD over mini-batches. The snapshot is never modified. Throws ClientError
/// when the train split is empty.
ClientResult client_update(const TrainingContext& ctx, std::span<const double> snapshot, const ClientShard& shard,
                           const FedConfig& cfg, std::size_t round);

struct ClientReport {
    std::size_t client_id = 0;
    bool ok = false;
    double final_loss = 0.0;
    std::size_t train_size = 0;
    std::optional<double> eval_accuracy;
    std::optional<double> eval_f1;
    std::string error;
};

struct RoundReport {
    std::size_t round = 0;  // 1-based
    std::vector<ClientReport> clients;
    std::optional<double> eval_accuracy;  // global held-out set
    std::optional<double> eval_f1;
    std::optional<double> eval_loss;
    std::optional<double> client_eval_accuracy;  // mean over clients' local eval splits
    std::optional<double> client_eval_f1;
    std::uint64_t uplink_bytes = 0;
    std::uint64_t downlink_bytes = 0;
    double wall_time_s = 0.0;
};

struct GlobalState {
    TrainableVector theta;
    std::size_t round = 0;
    std::vector<RoundReport> history;
};

/// One round: every shard's client trains from the same snapshot of
/// theta_global (in parallel when cfg.threads > 1), reporting clients are
/// averaged in client-id order, and the new global parameters are evaluated
/// on `global_eval`. Failed clients are skipped; if all fail, RoundError.
GlobalState run_round(const GlobalState& state, std::span<const ClientShard> shards, const FedConfig& cfg,
                      const TrainingContext& ctx, std::span<const Record> global_eval);

/// Records available to an experiment: the training pool that gets
/// partitioned, and the server-side held-out set.
struct ExperimentData {
    std::vector<Record> pool;
    std::vector<Record> global_eval;
};

struct RunSpec {
    ModelConfig model;
    LoraConfig lora;
    FedConfig fed;
    /// partition.clients may exceed fed.clients; the run then uses only the
    /// first fed.clients shards. 0 means "same as fed.clients".
    PartitionSpec partition;
    double eval_frac = 0.2;
};

struct RunResult {
    GlobalState state;
    AdaptedModel model;  // prototype loaded with the final theta_global
    ParamBreakdown params;
};

using RoundCallback = std::function<void(const RoundReport&)>;

/// Builds the client shards for a run (partition, then per-client split).
std::vector<ClientShard> make_client_shards(const RunSpec& spec, std::span<const Record> pool);

RunResult run_federated(const RunSpec& spec, const Vocab& vocab, const ExperimentData& data,
                        const RoundCallback& on_round = {});

/// Same pipeline on a single shard holding the whole pool, no aggregation and
/// no communication. Each "round" is E local epochs.
RunResult run_centralized(const RunSpec& spec, const Vocab& vocab, const ExperimentData& data,
                          const RoundCallback& on_round = {});

}  // namespace fedlora
