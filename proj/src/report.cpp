// SPDX-License-Identifier: Apache-2.0
#include "fedlora/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "fedlora/errors.hpp"

namespace fedlora {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string fixed(const std::optional<double>& v, int digits) { return v ? fixed(*v, digits) : "-"; }

}  // namespace

json to_json(const RoundReport& r) {
    json clients = json::array();
    for (const auto& c : r.clients) {
        clients.push_back({{"client_id", c.client_id},
                           {"ok", c.ok},
                           {"final_loss", c.ok ? json(c.final_loss) : json(nullptr)},
                           {"train_size", c.train_size},
                           {"eval_accuracy", optional_number(c.eval_accuracy)},
                           {"eval_f1", optional_number(c.eval_f1)},
                           {"error", c.error}});
    }
    return {{"round", r.round},
            {"eval_accuracy", optional_number(r.eval_accuracy)},
            {"eval_f1", optional_number(r.eval_f1)},
            {"eval_loss", optional_number(r.eval_loss)},
            {"client_eval_accuracy", optional_number(r.client_eval_accuracy)},
            {"client_eval_f1", optional_number(r.client_eval_f1)},
            {"uplink_bytes", r.uplink_bytes},
            {"downlink_bytes", r.downlink_bytes},
            {"wall_time_s", r.wall_time_s},
            {"clients", clients}};
}

RoundReport round_report_from_json(const json& j) {
    RoundReport r;
    r.round = j.at("round").get<std::size_t>();
    r.eval_accuracy = read_optional(j, "eval_accuracy");
    r.eval_f1 = read_optional(j, "eval_f1");
    r.eval_loss = read_optional(j, "eval_loss");
    r.client_eval_accuracy = read_optional(j, "client_eval_accuracy");
    r.client_eval_f1 = read_optional(j, "client_eval_f1");
    r.uplink_bytes = j.at("uplink_bytes").get<std::uint64_t>();
    r.downlink_bytes = j.at("downlink_bytes").get<std::uint64_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    for (const auto& c : j.at("clients")) {
        ClientReport cr;
        cr.client_id = c.at("client_id").get<std::size_t>();
        cr.ok = c.at("ok").get<bool>();
        cr.final_loss = read_optional(c, "final_loss").value_or(0.0);
        cr.train_size = c.at("train_size").get<std::size_t>();
        cr.eval_accuracy = read_optional(c, "eval_accuracy");
        cr.eval_f1 = read_optional(c, "eval_f1");
        cr.error = c.value("error", "");
        r.clients.push_back(std::move(cr));
    }
    return r;
}

std::vector<RoundReport> read_rounds(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open " + path.string());
    std::vector<RoundReport> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(round_report_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

RunSummary summarize(const std::string& mode, std::size_t clients, const RunResult& run, double wall_time_s) {
    RunSummary s;
    s.mode = mode;
    s.rounds = run.state.history.size();
    s.clients = clients;
    if (!run.state.history.empty()) {
        const auto& last = run.state.history.back();
        s.final_eval_accuracy = last.eval_accuracy.value_or(0.0);
        s.final_eval_f1 = last.eval_f1.value_or(0.0);
    }
    for (const auto& r : run.state.history) {
        s.total_uplink_bytes += r.uplink_bytes;
        s.total_downlink_bytes += r.downlink_bytes;
    }
    s.params = run.params;
    s.theta_norm = l2_norm(run.state.theta);
    s.wall_time_s = wall_time_s;
    return s;
}

json to_json(const RunSummary& s) {
    return {{"mode", s.mode},
            {"rounds", s.rounds},
            {"clients", s.clients},
            {"final_eval_accuracy", s.final_eval_accuracy},
            {"final_eval_f1", s.final_eval_f1},
            {"total_uplink_bytes", s.total_uplink_bytes},
            {"total_downlink_bytes", s.total_downlink_bytes},
            {"trainable_params", s.params.trainable},
            {"adapter_params", s.params.adapter_params},
            {"head_params", s.params.head_params},
            {"dense_equivalent_params", s.params.dense_params},
            {"total_params", s.params.total},
            {"trainable_ratio", s.params.trainable_ratio()},
            {"theta_norm", s.theta_norm},
            {"wall_time_s", s.wall_time_s}};
}

void print_rounds(std::ostream& out, const std::vector<RoundReport>& rounds) {
    out << "round  eval_acc  eval_f1  client_acc  uplink_B  downlink_B  cumulative_B\n";
    std::uint64_t cumulative = 0;
    for (const auto& r : rounds) {
        cumulative += r.uplink_bytes + r.downlink_bytes;
        char line[160];
        std::snprintf(line, sizeof line, "%5zu  %8s  %7s  %10s  %8llu  %10llu  %12llu\n", r.round,
                      fixed(r.eval_accuracy, 4).c_str(), fixed(r.eval_f1, 4).c_str(),
                      fixed(r.client_eval_accuracy, 4).c_str(), static_cast<unsigned long long>(r.uplink_bytes),
                      static_cast<unsigned long long>(r.downlink_bytes), static_cast<unsigned long long>(cumulative));
        out << line;
    }
    out << "total communication: " << cumulative << " bytes over " << rounds.size() << " round(s)\n";
}

void write_plot_csv(const std::filesystem::path& path, const std::vector<RoundReport>& rounds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "round,eval_accuracy,eval_f1,eval_loss,uplink_bytes,downlink_bytes,cumulative_bytes\n";
    std::uint64_t cumulative = 0;
    for (const auto& r : rounds) {
        cumulative += r.uplink_bytes + r.downlink_bytes;
        auto cell = [](const std::optional<double>& v) { return v ? fixed(*v, 6) : std::string(); };
        out << r.round << ',' << cell(r.eval_accuracy) << ',' << cell(r.eval_f1) << ',' << cell(r.eval_loss) << ','
            << r.uplink_bytes << ',' << r.downlink_bytes << ',' << cumulative << '\n';
    }
}

}  // namespace fedlora
