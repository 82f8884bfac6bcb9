// SPDX-License-Identifier: Apache-2.0
// fedlora: train, ablate and report federated LoRA experiments.
//
// Exit codes: 0 success, 1 runtime failure, 2 config or usage error.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedlora/errors.hpp"
#include "fedlora/experiment.hpp"
#include "fedlora/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct TrainArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string output_dir;
    std::size_t threads = 0;
};

void add_config_options(CLI::App* cmd, TrainArgs& args) {
    cmd->add_option("config", args.config, "Experiment config (JSON)")->required();
    cmd->add_option("--set", args.overrides, "Override a config leaf, e.g. --set fed.eta=0.05");
    cmd->add_option("--output", args.output_dir, "Output directory (overrides output_dir)");
    cmd->add_option("--threads", args.threads, "Client worker threads; 1 is sequential and bit-deterministic");
}

fedlora::ExperimentConfig load(const TrainArgs& args) {
    std::vector<std::string> overrides = args.overrides;
    if (!args.output_dir.empty()) overrides.push_back("output_dir=\"" + args.output_dir + "\"");
    if (args.threads > 0) overrides.push_back("fed.threads=" + std::to_string(args.threads));
    return fedlora::load_config(args.config, overrides);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            seeds.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw fedlora::ConfigError("--seeds: '" + item + "' is not a non-negative integer");
        }
    }
    if (seeds.empty()) throw fedlora::ConfigError("--seeds: at least one seed is required");
    return seeds;
}

int train(const TrainArgs& args, fedlora::TrainMode mode) {
    const auto cfg = load(args);
    const int verbosity = fedlora::verbosity_from_env();
    const auto summary = fedlora::train_and_write(cfg, mode, std::cerr, verbosity);
    std::cout << fedlora::to_json(summary).dump(2) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated LoRA fine-tuning simulator"};
    app.require_subcommand(1);

    TrainArgs fed_args;
    auto* fed_cmd = app.add_subcommand("train-federated", "FedAvg over simulated clients");
    add_config_options(fed_cmd, fed_args);

    TrainArgs central_args;
    auto* central_cmd = app.add_subcommand("train-centralized", "Same pipeline on the pooled data");
    add_config_options(central_cmd, central_args);

    TrainArgs ablate_args;
    std::string grid;
    std::string seeds = "1,2,3,4,5";
    std::string ablation_csv;
    auto* ablate_cmd = app.add_subcommand("ablate", "Run a grid of (clients, client epochs, global epochs) cells");
    add_config_options(ablate_cmd, ablate_args);
    ablate_cmd->add_option("--grid", grid, "K,E,R triples separated by ';', e.g. \"1,3,10;1,10,3;3,10,3\"")
        ->required();
    ablate_cmd->add_option("--seeds", seeds, "Comma-separated base seeds")->capture_default_str();
    ablate_cmd->add_option("--csv", ablation_csv, "Where to write the table (default <output_dir>/ablation.csv)");

    std::string run_dir;
    std::string plot_csv;
    auto* report_cmd = app.add_subcommand("report", "Summarize a finished run directory");
    report_cmd->add_option("run_dir", run_dir, "Directory containing rounds.jsonl")->required();
    report_cmd->add_option("--plot-csv", plot_csv, "Also write round-vs-metric CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (fed_cmd->parsed()) return train(fed_args, fedlora::TrainMode::Federated);
        if (central_cmd->parsed()) return train(central_args, fedlora::TrainMode::Centralized);
        if (ablate_cmd->parsed()) {
            const auto cells = fedlora::parse_grid(grid);
            const auto seed_list = parse_seeds(seeds);
            const auto cfg = load(ablate_args);
            const auto rows = fedlora::run_ablation(cfg, cells, seed_list, std::cerr, fedlora::verbosity_from_env());
            const std::filesystem::path out =
                ablation_csv.empty() ? cfg.output_dir / "ablation.csv" : std::filesystem::path(ablation_csv);
            if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
            fedlora::write_ablation_csv(out, rows);
            fedlora::print_ablation(std::cout, rows);
            return kOk;
        }
        if (report_cmd->parsed()) {
            const auto rounds = fedlora::read_rounds(std::filesystem::path(run_dir) / "rounds.jsonl");
            fedlora::print_rounds(std::cout, rounds);
            if (!plot_csv.empty()) fedlora::write_plot_csv(plot_csv, rounds);
            return kOk;
        }
    } catch (const fedlora::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const fedlora::SchemaError& e) {
        std::cerr << "schema error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kUsageError;
}
