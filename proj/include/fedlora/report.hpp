// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedlora/federation.hpp"
#include "json.hpp"

namespace fedlora {

/// rounds.jsonl holds one object per round:
///   round, eval_accuracy, eval_f1, eval_loss, client_eval_accuracy,
///   client_eval_f1, uplink_bytes, downlink_bytes, wall_time_s,
///   clients: [{client_id, ok, final_loss, train_size, eval_accuracy,
///              eval_f1, error}]
/// Metrics that were not computed are null. wall_time_s is the only field
/// that varies between identical runs.
nlohmann::json to_json(const RoundReport& r);
RoundReport round_report_from_json(const nlohmann::json& j);

/// Throws SchemaError when a line is not a valid round object.
std::vector<RoundReport> read_rounds(const std::filesystem::path& path);

struct RunSummary {
    std::string mode;  // "federated" or "centralized"
    std::size_t rounds = 0;
    std::size_t clients = 0;
    double final_eval_accuracy = 0.0;
    double final_eval_f1 = 0.0;
    std::uint64_t total_uplink_bytes = 0;
    std::uint64_t total_downlink_bytes = 0;
    ParamBreakdown params;
    double theta_norm = 0.0;
    double wall_time_s = 0.0;
};

RunSummary summarize(const std::string& mode, std::size_t clients, const RunResult& run, double wall_time_s);
nlohmann::json to_json(const RunSummary& s);

/// Human-readable per-round table with cumulative communication.
void print_rounds(std::ostream& out, const std::vector<RoundReport>& rounds);
/// round,eval_accuracy,eval_f1,eval_loss,uplink_bytes,downlink_bytes,cumulative_bytes
void write_plot_csv(const std::filesystem::path& path, const std::vector<RoundReport>& rounds);

double l2_norm(std::span<const double> v);

}  // namespace fedlora
