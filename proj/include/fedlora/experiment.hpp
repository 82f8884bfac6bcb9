// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedlora/federation.hpp"
#include "fedlora/report.hpp"
#include "json.hpp"

namespace fedlora {

enum class DataSource { Synthetic, Csv };

struct DataConfig {
    DataSource source = DataSource::Synthetic;
    std::size_t synthetic_n = 2000;
    std::uint64_t synthetic_seed = 0;
    std::vector<std::filesystem::path> csv;  // concatenated in order
    double global_eval_frac = 0.2;           // carved before partitioning
    std::uint64_t global_eval_seed = 0;
    double eval_frac = 0.2;                  // per-client split
    PartitionSpec partition;                 // clients 0 = fed.clients

    DataConfig() { partition.clients = 0; }
};

struct ExperimentConfig {
    ModelConfig model;
    LoraConfig lora;
    FedConfig fed;
    DataConfig data;
    std::filesystem::path output_dir = "runs/default";

    void validate() const;
    RunSpec run_spec() const;
    /// Replaces every seed with one derived from `base`.
    ExperimentConfig with_base_seed(std::uint64_t base) const;
};

/// Parses a config document. Unknown keys and wrong types raise ConfigError
/// naming the dotted field path. Missing keys keep their defaults.
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct PreparedData {
    ExperimentData data;
    Vocab vocab;
};

/// Loads or generates the corpus, carves the global eval set and builds the
/// vocabulary from the remaining pool.
PreparedData prepare_data(const ExperimentConfig& cfg);

enum class TrainMode { Federated, Centralized };

/// Runs one experiment and writes rounds.jsonl, summary.json, adapters.bin,
/// model.bin (adapters merged), vocab.txt and config.json into output_dir.
RunSummary train_and_write(const ExperimentConfig& cfg, TrainMode mode, std::ostream& log, int verbosity = 1);

struct GridCell {
    std::size_t clients = 1;
    std::size_t local_epochs = 1;
    std::size_t rounds = 1;
};

/// "K,E,R" triples separated by ';' or whitespace, e.g. "1,3,10;1,10,3".
std::vector<GridCell> parse_grid(const std::string& text);

struct AblationRow {
    GridCell cell;
    std::uint64_t seed = 0;
    bool ok = false;
    double eval_accuracy = 0.0;
    double eval_f1 = 0.0;
    std::string error;
};

/// Runs every (cell, seed). All cells of a seed share one partition of the
/// pool into max-K shards; a cell with K clients trains on the first K.
/// A failing cell is recorded and the rest continue.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const std::vector<GridCell>& grid,
                                      const std::vector<std::uint64_t>& seeds, std::ostream& log, int verbosity = 1);

/// Columns: Num Clients,Client Epochs,Global Epochs,Eval Accuracy,Eval F1,Seed,Status
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
void print_ablation(std::ostream& out, const std::vector<AblationRow>& rows);

/// FEDLORA_VERBOSITY: 0 quiet, 1 per-round progress (default), 2 per-client detail.
int verbosity_from_env();

}  // namespace fedlora
