// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fedlora/errors.hpp"
#include "fedlora/experiment.hpp"
#include "fedlora/report.hpp"
#include "test_support.hpp"

using namespace fedlora;
using nlohmann::json;

namespace {

json tiny_config(const std::filesystem::path& out) {
    json j = json::parse(R"({
      "model": {"vocab_size": 128, "d_model": 8, "n_heads": 2, "n_layers": 1, "ff_dim": 12, "max_seq_len": 20, "seed": 1},
      "lora": {"rank": 2, "alpha": 2, "targets": ["Q", "V"], "seed": 2},
      "fed": {"clients": 2, "rounds": 3, "local_epochs": 1, "eta": 0.2, "batch_size": 8, "seed": 3},
      "data": {"source": "synthetic", "synthetic": {"n": 120, "seed": 4}, "partition": {"strategy": "iid", "seed": 5}}
    })");
    j["output_dir"] = out.string();
    return j;
}

std::string expect_config_error(const json& j) {
    try {
        parse_config(j).validate();
    } catch (const ConfigError& e) {
        return e.what();
    }
    FAIL("expected ConfigError");
    return {};
}

}  // namespace

TEST_CASE("config parsing names the offending field") {
    json j = tiny_config("out");
    j["fed"]["etta"] = 0.1;
    CHECK(expect_config_error(j).find("fed.etta") != std::string::npos);

    j = tiny_config("out");
    j["model"]["d_model"] = "big";
    CHECK(expect_config_error(j).find("model.d_model") != std::string::npos);

    j = tiny_config("out");
    j["lora"]["targets"] = {"Q", "W"};
    CHECK(expect_config_error(j).find("lora.targets") != std::string::npos);

    j = tiny_config("out");
    j["fed"]["local_epochs"] = 0;
    CHECK(expect_config_error(j).find("fed.local_epochs") != std::string::npos);

    j = tiny_config("out");
    j["data"] = {{"source", "csv"}, {"csv", "/nonexistent/dreaddit.csv"}};
    CHECK(expect_config_error(j).find("data.csv") != std::string::npos);

    j = tiny_config("out");
    j["model"]["n_heads"] = 3;
    CHECK(expect_config_error(j).find("model") != std::string::npos);
}

TEST_CASE("config json round trip and overrides") {
    const auto cfg = parse_config(tiny_config("out"));
    const auto again = parse_config(to_json(cfg));
    CHECK(to_json(again) == to_json(cfg));
    CHECK(again.model == cfg.model);

    json doc = tiny_config("out");
    apply_override(doc, "fed.eta=0.05");
    apply_override(doc, "lora.targets=[\"K\"]");
    apply_override(doc, "output_dir=elsewhere");
    const auto o = parse_config(doc);
    CHECK(o.fed.eta == 0.05);
    CHECK(o.lora.targets == std::vector<Target>{Target::K});
    CHECK(o.output_dir == "elsewhere");
    CHECK_THROWS_AS(apply_override(doc, "noequals"), ConfigError);
    CHECK_THROWS_AS(apply_override(doc, "fed.eta.x=1"), ConfigError);
}

TEST_CASE("base seeds fan out deterministically") {
    const auto cfg = parse_config(tiny_config("out"));
    const auto a = cfg.with_base_seed(1);
    const auto b = cfg.with_base_seed(1);
    const auto c = cfg.with_base_seed(2);
    CHECK(to_json(a) == to_json(b));
    CHECK(a.model.seed != c.model.seed);
    CHECK(a.fed.seed != a.model.seed);
}

TEST_CASE("grid parsing") {
    const auto g = parse_grid("1,3,10;1,10,3; 3,10,3");
    REQUIRE(g.size() == 3);
    CHECK(g[0].clients == 1);
    CHECK(g[0].local_epochs == 3);
    CHECK(g[0].rounds == 10);
    CHECK(g[2].clients == 3);
    CHECK_THROWS_AS(parse_grid(""), ConfigError);
    CHECK_THROWS_AS(parse_grid("1,2"), ConfigError);
    CHECK_THROWS_AS(parse_grid("1,0,2"), ConfigError);
}

TEST_CASE("train_and_write produces the documented artifacts") {
    const auto dir = testing::scratch_dir("train");
    auto cfg = parse_config(tiny_config(dir / "fed"));
    std::ostringstream log;
    const auto summary = train_and_write(cfg, TrainMode::Federated, log, 0);
    for (const char* name : {"rounds.jsonl", "summary.json", "adapters.bin", "model.bin", "vocab.txt", "config.json"})
        CHECK(std::filesystem::exists(dir / "fed" / name));

    const auto rounds = read_rounds(dir / "fed" / "rounds.jsonl");
    CHECK(rounds.size() == 3);
    CHECK(summary.params.adapter_params == 2 * 2 * (8 + 8));
    CHECK(summary.params.trainable == summary.params.adapter_params + 8 * 2 + 2);
    std::uint64_t up = 0;
    for (const auto& r : rounds) up += r.uplink_bytes;
    CHECK(summary.total_uplink_bytes == up);

    std::ifstream sj(dir / "fed" / "summary.json");
    const json s = json::parse(sj);
    CHECK(s.at("trainable_params") == summary.params.trainable);
    CHECK(s.at("total_params") == summary.params.total);

    // the merged model reproduces the adapter path
    const auto merged = load_model(dir / "fed" / "model.bin");
    CHECK(merged.config == cfg.model);

    const auto back = parse_config(json::parse(std::ifstream(dir / "fed" / "config.json")));
    CHECK(to_json(back) == to_json(cfg));

    // rerun: identical metrics
    cfg.output_dir = dir / "fed2";
    train_and_write(cfg, TrainMode::Federated, log, 0);
    const auto rerun = read_rounds(dir / "fed2" / "rounds.jsonl");
    for (std::size_t i = 0; i < rounds.size(); ++i) {
        auto a = to_json(rounds[i]);
        auto b = to_json(rerun[i]);
        a.erase("wall_time_s");
        b.erase("wall_time_s");
        for (auto& c : a["clients"]) c.erase("wall_time_s");
        for (auto& c : b["clients"]) c.erase("wall_time_s");
        CHECK(a.dump() == b.dump());
    }
}

TEST_CASE("centralized run warns about clients and matches one-client federated") {
    const auto dir = testing::scratch_dir("central");
    auto cfg = parse_config(tiny_config(dir / "c"));
    std::ostringstream log;
    const auto central = train_and_write(cfg, TrainMode::Centralized, log, 0);
    CHECK(log.str().find("warning") != std::string::npos);
    CHECK(central.total_uplink_bytes == 0);

    cfg.fed.clients = 1;
    cfg.output_dir = dir / "f";
    const auto fed = train_and_write(cfg, TrainMode::Federated, log, 0);
    CHECK(std::abs(fed.theta_norm - central.theta_norm) < 1e-9);

    std::ifstream a(dir / "c" / "summary.json");
    std::ifstream b(dir / "f" / "summary.json");
    const json ja = json::parse(a);
    const json jb = json::parse(b);
    for (const auto& [key, value] : ja.items()) CHECK(jb.contains(key));
}

TEST_CASE("rounds.jsonl rejects corrupt lines") {
    const auto dir = testing::scratch_dir("corrupt");
    std::ofstream(dir / "rounds.jsonl") << "{\"round\": 1}\nnot json\n";
    CHECK_THROWS_AS(read_rounds(dir / "rounds.jsonl"), SchemaError);
    CHECK_THROWS_AS(read_rounds(dir / "missing.jsonl"), SchemaError);
}

TEST_CASE("ablation rows keep grid order and csv columns") {
    const auto dir = testing::scratch_dir("ablate");
    const auto cfg = parse_config(tiny_config(dir));
    std::ostringstream log;
    const auto rows = run_ablation(cfg, parse_grid("1,1,2;1,2,1;2,2,1"), {7}, log, 0);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].cell.clients == 1);
    CHECK(rows[2].cell.clients == 2);
    for (const auto& r : rows) CHECK(r.ok);
    write_ablation_csv(dir / "ablation.csv", rows);
    std::ifstream in(dir / "ablation.csv");
    const auto table = parse_csv(in);
    REQUIRE(table.size() == 4);
    CHECK(table[0] == std::vector<std::string>{"Num Clients", "Client Epochs", "Global Epochs", "Eval Accuracy",
                                               "Eval F1", "Seed", "Status"});

    // a failing cell is recorded and the rest continue
    const auto mixed = run_ablation(cfg, parse_grid("1,1,1;500,1,1"), {7}, log, 0);
    CHECK(mixed[0].ok);
    CHECK_FALSE(mixed[1].ok);
    CHECK_FALSE(mixed[1].error.empty());
}
