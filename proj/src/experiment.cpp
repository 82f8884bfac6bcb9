// SPDX-License-Identifier: Apache-2.0
#include "fedlora/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "fedlora/errors.hpp"
#include "fedlora/report.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

using nlohmann::json;

namespace {

// Walks one JSON object, converting fields and remembering which keys were
// consumed so leftovers can be reported as unknown.
class FieldReader {
public:
    FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void read(const std::string& key, std::size_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer() || v->get<std::int64_t>() < 0) fail(key, "expected a non-negative integer");
            out = v->get<std::size_t>();
        }
    }

    void read(const std::string& key, std::uint64_t& out, int) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                            v->get<std::int64_t>() < 0)) {
                fail(key, "expected a non-negative integer");
            }
            out = v->get<std::uint64_t>();
        }
    }

    void read(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) fail(key, "expected a number");
            out = v->get<double>();
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) fail(key, "expected a string");
            out = v->get<std::string>();
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError(child(key) + ": " + msg);
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError(child(key) + ": unknown field");
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// Rethrows validation errors with the config section prefixed when missing.
template <typename Fn>
void validate_section(const char* section, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        if (msg.rfind(section, 0) == 0) throw;
        throw ConfigError(std::string(section) + ": " + msg);
    }
}

ModelConfig parse_model(const json& j) {
    ModelConfig m;
    FieldReader r(j, "model");
    r.read("vocab_size", m.vocab_size);
    r.read("d_model", m.d_model);
    r.read("n_heads", m.n_heads);
    r.read("n_layers", m.n_layers);
    r.read("ff_dim", m.ff_dim);
    r.read("max_seq_len", m.max_seq_len);
    r.read("n_classes", m.n_classes);
    r.read("seed", m.seed, 0);
    r.finish();
    return m;
}

LoraConfig parse_lora(const json& j) {
    LoraConfig l;
    FieldReader r(j, "lora");
    r.read("rank", l.rank);
    r.read("alpha", l.alpha);
    if (const json* t = r.find("targets")) {
        if (!t->is_array()) r.fail("targets", "expected an array of target names");
        l.targets.clear();
        for (const auto& name : *t) {
            if (!name.is_string()) r.fail("targets", "expected target names as strings");
            try {
                l.targets.push_back(parse_target(name.get<std::string>()));
            } catch (const ConfigError& e) {
                r.fail("targets", e.what());
            }
        }
    }
    r.read("seed", l.seed, 0);
    r.finish();
    return l;
}

FedConfig parse_fed(const json& j) {
    FedConfig f;
    FieldReader r(j, "fed");
    r.read("clients", f.clients);
    r.read("rounds", f.rounds);
    r.read("local_epochs", f.local_epochs);
    r.read("eta", f.eta);
    r.read("batch_size", f.batch_size);
    r.read("seed", f.seed, 0);
    std::string agg = to_string(f.aggregation);
    r.read("aggregation", agg);
    try {
        f.aggregation = parse_aggregation(agg);
    } catch (const ConfigError& e) {
        r.fail("aggregation", e.what());
    }
    r.read("threads", f.threads);
    r.finish();
    return f;
}

PartitionSpec parse_partition(const json& j) {
    PartitionSpec p;
    p.clients = 0;
    FieldReader r(j, "data.partition");
    r.read("clients", p.clients);
    std::string strategy = to_string(p.strategy);
    r.read("strategy", strategy);
    try {
        p.strategy = parse_partition_strategy(strategy);
    } catch (const ConfigError& e) {
        r.fail("strategy", e.what());
    }
    r.read("alpha", p.alpha);
    if (const json* ratios = r.find("ratios")) {
        if (!ratios->is_array()) r.fail("ratios", "expected an array of numbers");
        for (const auto& v : *ratios) {
            if (!v.is_number()) r.fail("ratios", "expected an array of numbers");
            p.ratios.push_back(v.get<double>());
        }
    }
    r.read("seed", p.seed, 0);
    r.finish();
    return p;
}

DataConfig parse_data(const json& j) {
    DataConfig d;
    d.partition.clients = 0;
    FieldReader r(j, "data");
    std::string source = "synthetic";
    r.read("source", source);
    if (source == "synthetic") {
        d.source = DataSource::Synthetic;
    } else if (source == "csv") {
        d.source = DataSource::Csv;
    } else {
        r.fail("source", "expected \"synthetic\" or \"csv\"");
    }
    if (const json* syn = r.find("synthetic")) {
        FieldReader s(*syn, "data.synthetic");
        s.read("n", d.synthetic_n);
        s.read("seed", d.synthetic_seed, 0);
        s.finish();
    }
    if (const json* csv = r.find("csv")) {
        if (csv->is_string()) {
            d.csv.emplace_back(csv->get<std::string>());
        } else if (csv->is_array()) {
            for (const auto& p : *csv) {
                if (!p.is_string()) r.fail("csv", "expected a path or an array of paths");
                d.csv.emplace_back(p.get<std::string>());
            }
        } else {
            r.fail("csv", "expected a path or an array of paths");
        }
    }
    r.read("global_eval_frac", d.global_eval_frac);
    r.read("global_eval_seed", d.global_eval_seed, 0);
    r.read("eval_frac", d.eval_frac);
    if (const json* p = r.find("partition")) d.partition = parse_partition(*p);
    r.finish();
    return d;
}

std::uint64_t seed_for(std::uint64_t base, std::uint64_t slot) { return derive_seed(base, {0x534545440000ULL + slot}); }

std::string fmt_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    validate_section("model", [&] { model.validate(); });
    validate_section("lora", [&] { lora.validate(model); });
    validate_section("fed", [&] { fed.validate(); });
    if (data.source == DataSource::Synthetic && data.synthetic_n < 2) {
        throw ConfigError("data.synthetic.n must be at least 2");
    }
    if (data.source == DataSource::Csv) {
        if (data.csv.empty()) throw ConfigError("data.csv: at least one path is required for a csv source");
        for (const auto& p : data.csv) {
            if (!std::filesystem::exists(p)) throw ConfigError("data.csv: file not found: " + p.string());
        }
    }
    if (!(data.global_eval_frac > 0.0 && data.global_eval_frac < 1.0)) {
        throw ConfigError("data.global_eval_frac must lie strictly between 0 and 1");
    }
    if (!(data.eval_frac > 0.0 && data.eval_frac < 1.0)) {
        throw ConfigError("data.eval_frac must lie strictly between 0 and 1");
    }
    PartitionSpec p = data.partition;
    if (p.clients == 0) p.clients = fed.clients;
    if (p.clients < fed.clients) throw ConfigError("data.partition.clients must be 0 or at least fed.clients");
    validate_section("data.partition", [&] { p.validate(); });
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

RunSpec ExperimentConfig::run_spec() const {
    RunSpec spec;
    spec.model = model;
    spec.lora = lora;
    spec.fed = fed;
    spec.partition = data.partition;
    spec.eval_frac = data.eval_frac;
    return spec;
}

ExperimentConfig ExperimentConfig::with_base_seed(std::uint64_t base) const {
    ExperimentConfig c = *this;
    c.model.seed = seed_for(base, 1);
    c.lora.seed = seed_for(base, 2);
    c.fed.seed = seed_for(base, 3);
    c.data.partition.seed = seed_for(base, 4);
    c.data.synthetic_seed = seed_for(base, 5);
    c.data.global_eval_seed = seed_for(base, 6);
    return c;
}

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig cfg;
    FieldReader r(j, "");
    if (const json* m = r.find("model")) cfg.model = parse_model(*m);
    if (const json* l = r.find("lora")) cfg.lora = parse_lora(*l);
    if (const json* f = r.find("fed")) cfg.fed = parse_fed(*f);
    if (const json* d = r.find("data")) {
        cfg.data = parse_data(*d);
    } else {
        cfg.data.partition.clients = 0;
    }
    std::string out = cfg.output_dir.string();
    r.read("output_dir", out);
    cfg.output_dir = out;
    r.finish();
    return cfg;
}

json to_json(const ExperimentConfig& c) {
    json targets = json::array();
    for (Target t : c.lora.targets) targets.push_back(std::string(to_string(t)));
    json csv = json::array();
    for (const auto& p : c.data.csv) csv.push_back(p.string());
    return {{"model",
             {{"vocab_size", c.model.vocab_size},
              {"d_model", c.model.d_model},
              {"n_heads", c.model.n_heads},
              {"n_layers", c.model.n_layers},
              {"ff_dim", c.model.ff_dim},
              {"max_seq_len", c.model.max_seq_len},
              {"n_classes", c.model.n_classes},
              {"seed", c.model.seed}}},
            {"lora", {{"rank", c.lora.rank}, {"alpha", c.lora.alpha}, {"targets", targets}, {"seed", c.lora.seed}}},
            {"fed",
             {{"clients", c.fed.clients},
              {"rounds", c.fed.rounds},
              {"local_epochs", c.fed.local_epochs},
              {"eta", c.fed.eta},
              {"batch_size", c.fed.batch_size},
              {"seed", c.fed.seed},
              {"aggregation", to_string(c.fed.aggregation)},
              {"threads", c.fed.threads}}},
            {"data",
             {{"source", c.data.source == DataSource::Synthetic ? "synthetic" : "csv"},
              {"synthetic", {{"n", c.data.synthetic_n}, {"seed", c.data.synthetic_seed}}},
              {"csv", csv},
              {"global_eval_frac", c.data.global_eval_frac},
              {"global_eval_seed", c.data.global_eval_seed},
              {"eval_frac", c.data.eval_frac},
              {"partition",
               {{"clients", c.data.partition.clients},
                {"strategy", to_string(c.data.partition.strategy)},
                {"alpha", c.data.partition.alpha},
                {"ratios", c.data.partition.ratios},
                {"seed", c.data.partition.seed}}}}},
            {"output_dir", c.output_dir.string()}};
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' must look like path.to.field=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    json* node = &doc;
    std::stringstream parts(path);
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(parts, key, '.')) {
        if (key.empty()) throw ConfigError("override path '" + path + "' has an empty component");
        keys.push_back(key);
    }
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object value");
        node = &(*node)[keys[i]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object value");
    (*node)[keys.back()] = std::move(value);
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    for (const auto& o : overrides) apply_override(doc, o);
    ExperimentConfig cfg = parse_config(doc);
    cfg.validate();
    return cfg;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    std::vector<Record> records;
    if (cfg.data.source == DataSource::Synthetic) {
        records = synth_corpus(cfg.data.synthetic_n, cfg.data.synthetic_seed);
    } else {
        for (const auto& p : cfg.data.csv) {
            auto part = load_corpus(p);
            records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
    }
    auto split = split_train_eval(records, cfg.data.global_eval_frac, cfg.data.global_eval_seed);
    PreparedData out{{std::move(split.train), std::move(split.eval)}, Vocab()};
    out.vocab = build_vocab(out.data.pool, cfg.model.vocab_size);
    return out;
}

RunSummary train_and_write(const ExperimentConfig& cfg, TrainMode mode, std::ostream& log, int verbosity) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const bool federated = mode == TrainMode::Federated;
    if (!federated && cfg.fed.clients != 1 && verbosity >= 0) {
        log << "warning: fed.clients=" << cfg.fed.clients << " is ignored in centralized mode\n";
    }
    const PreparedData prepared = prepare_data(cfg);
    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream rounds(cfg.output_dir / "rounds.jsonl");
    if (!rounds) throw DataError("cannot write " + (cfg.output_dir / "rounds.jsonl").string());

    const RoundCallback on_round = [&](const RoundReport& r) {
        rounds << to_json(r).dump() << '\n';
        rounds.flush();
        if (verbosity >= 1) {
            log << "round " << r.round << ": eval_acc=" << fmt_metric(r.eval_accuracy.value_or(0.0))
                << " eval_f1=" << fmt_metric(r.eval_f1.value_or(0.0)) << " uplink=" << r.uplink_bytes << "B\n";
        }
        if (verbosity >= 2) {
            for (const auto& c : r.clients) {
                log << "  client " << c.client_id << (c.ok ? " loss=" + fmt_metric(c.final_loss) : " failed: " + c.error)
                    << '\n';
            }
        }
    };
    const RunSpec spec = cfg.run_spec();
    const RunResult run = federated ? run_federated(spec, prepared.vocab, prepared.data, on_round)
                                    : run_centralized(spec, prepared.vocab, prepared.data, on_round);

    save_adapters(cfg.output_dir / "adapters.bin", run.model);
    save_model(cfg.output_dir / "model.bin", merge_adapters(run.model));
    prepared.vocab.save(cfg.output_dir / "vocab.txt");
    std::ofstream(cfg.output_dir / "config.json") << to_json(cfg).dump(2) << '\n';

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const RunSummary summary =
        summarize(federated ? "federated" : "centralized", federated ? cfg.fed.clients : 1, run, wall);
    std::ofstream(cfg.output_dir / "summary.json") << to_json(summary).dump(2) << '\n';
    return summary;
}

std::vector<GridCell> parse_grid(const std::string& text) {
    std::vector<GridCell> grid;
    std::string normalized = text;
    std::replace(normalized.begin(), normalized.end(), ';', ' ');
    std::stringstream ss(normalized);
    std::string triple;
    while (ss >> triple) {
        std::stringstream ts(triple);
        std::string field;
        std::vector<std::size_t> values;
        while (std::getline(ts, field, ',')) {
            try {
                std::size_t used = 0;
                const long long v = std::stoll(field, &used);
                if (used != field.size() || v < 1) throw std::invalid_argument(field);
                values.push_back(static_cast<std::size_t>(v));
            } catch (const std::exception&) {
                throw ConfigError("grid entry '" + triple + "' must be three positive integers K,E,R");
            }
        }
        if (values.size() != 3) throw ConfigError("grid entry '" + triple + "' must be three positive integers K,E,R");
        grid.push_back({values[0], values[1], values[2]});
    }
    if (grid.empty()) throw ConfigError("ablation grid is empty");
    return grid;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const std::vector<GridCell>& grid,
                                      const std::vector<std::uint64_t>& seeds, std::ostream& log, int verbosity) {
    if (grid.empty()) throw ConfigError("ablation grid is empty");
    if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
    std::vector<AblationRow> rows;
    for (std::uint64_t seed : seeds) {
        ExperimentConfig base = cfg.with_base_seed(seed);
        const PreparedData prepared = prepare_data(base);
        // Cells asking for more clients than records fail on their own
        // instead of shrinking the shared partition for everyone.
        std::size_t max_clients = 1;
        for (const auto& c : grid)
            if (c.clients <= prepared.data.pool.size()) max_clients = std::max(max_clients, c.clients);
        base.data.partition.clients = std::max(base.data.partition.clients, max_clients);
        for (const auto& cell : grid) {
            AblationRow row;
            row.cell = cell;
            row.seed = seed;
            try {
                if (cell.clients > prepared.data.pool.size()) {
                    throw DataError(std::to_string(cell.clients) + " clients requested but the pool holds only " +
                                    std::to_string(prepared.data.pool.size()) + " records");
                }
                ExperimentConfig c = base;
                c.fed.clients = cell.clients;
                c.fed.local_epochs = cell.local_epochs;
                c.fed.rounds = cell.rounds;
                c.validate();
                const RunResult run = run_federated(c.run_spec(), prepared.vocab, prepared.data);
                const auto& last = run.state.history.back();
                row.eval_accuracy = last.eval_accuracy.value_or(0.0);
                row.eval_f1 = last.eval_f1.value_or(0.0);
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            if (verbosity >= 1) {
                log << "seed " << seed << " K=" << cell.clients << " E=" << cell.local_epochs << " R=" << cell.rounds
                    << (row.ok ? ": acc=" + fmt_metric(row.eval_accuracy) + " f1=" + fmt_metric(row.eval_f1)
                               : ": failed: " + row.error)
                    << '\n';
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    const std::vector<std::string> header = {"Num Clients", "Client Epochs", "Global Epochs", "Eval Accuracy",
                                             "Eval F1",     "Seed",          "Status"};
    write_csv_row(out, header);
    for (const auto& r : rows) {
        const std::vector<std::string> fields = {std::to_string(r.cell.clients),
                                                 std::to_string(r.cell.local_epochs),
                                                 std::to_string(r.cell.rounds),
                                                 r.ok ? fmt_metric(r.eval_accuracy) : "",
                                                 r.ok ? fmt_metric(r.eval_f1) : "",
                                                 std::to_string(r.seed),
                                                 r.ok ? "ok" : "error: " + r.error};
        write_csv_row(out, fields);
    }
}

void print_ablation(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "Num Clients  Client Epochs  Global Epochs  Eval Accuracy  Eval F1  Seed\n";
    for (const auto& r : rows) {
        char line[200];
        std::snprintf(line, sizeof line, "%11zu  %13zu  %13zu  %13s  %7s  %llu\n", r.cell.clients,
                      r.cell.local_epochs, r.cell.rounds, r.ok ? fmt_metric(r.eval_accuracy).c_str() : "failed",
                      r.ok ? fmt_metric(r.eval_f1).c_str() : "-", static_cast<unsigned long long>(r.seed));
        out << line;
    }
}

int verbosity_from_env() {
    const char* v = std::getenv("FEDLORA_VERBOSITY");
    if (v == nullptr || *v == '\0') return 1;
    try {
        return std::stoi(v);
    } catch (const std::exception&) {
        return 1;
    }
}

}  // namespace fedlora
