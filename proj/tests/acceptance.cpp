// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 2 5        run only criteria 2 and 5
//
// DREADDIT_DIR points at a directory of Dreaddit CSVs for the corpus-size
// check in criterion 8; without it that check is skipped.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fedlora/autodiff.hpp"
#include "fedlora/data.hpp"
#include "fedlora/experiment.hpp"
#include "fedlora/federation.hpp"
#include "fedlora/lora.hpp"
#include "test_support.hpp"

using namespace fedlora;
using testing::finite_difference_check;
using testing::random_tensor;

namespace {

// Tolerances and budgets.
constexpr double kFdEps = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr int kGradTrials = 100;
constexpr double kGradBudgetS = 120.0;
constexpr double kEquivTol = 1e-9;
constexpr double kMergeTol = 1e-6;
constexpr int kMergeBatches = 100;
constexpr double kFedAvgTol = 1e-12;
constexpr double kDeskMinAccuracy = 0.90;
constexpr double kDeskMinF1 = 0.90;
constexpr double kDeskBudgetS = 300.0;
constexpr int kTrendSeeds = 5;
constexpr int kTrendMinWins = 4;
constexpr double kTrendBudgetS = 1800.0;
constexpr int kCommConfigs = 10;
constexpr double kMaxTrainableRatio = 0.05;
constexpr int kPartitionSpecs = 100;
constexpr std::size_t kDreadditTotal = 3553;

const std::filesystem::path kConfigDir = FEDLORA_CONFIG_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// --- criterion 1 -----------------------------------------------------------

NodeId probe(Graph& g, NodeId out, const Tensor& weights) { return sum(g, mul(g, out, g.constant(weights))); }

// Pushes every entry at least `gap` away from zero, keeping its sign.
void away_from_zero(Tensor& t, double gap) {
    for (double& v : t.data()) v += v >= 0 ? gap : -gap;
}

double op_trial(std::uint64_t seed) {
    SplitMix64 rng(seed);
    const std::size_t m = 2 + rng.below(3), n = 2 + rng.below(4), p = 1 + rng.below(4);
    Tensor a = random_tensor(m, n, rng);
    Tensor b = random_tensor(n, p, rng);
    Tensor c = random_tensor(m, n, rng);
    Tensor bias = random_tensor(1, n, rng);
    Tensor gamma = random_tensor(1, n, rng, 0.5, 1.5);
    Tensor beta = random_tensor(1, n, rng);
    Tensor r = random_tensor(m, n, rng);
    Tensor rp = random_tensor(m, p, rng);
    Tensor rt = random_tensor(n, m, rng);
    Tensor kinked = random_tensor(m, n, rng);
    away_from_zero(kinked, 1e-3);
    std::vector<std::size_t> idx(m + 2);
    for (auto& i : idx) i = rng.below(m);
    Tensor rg = random_tensor(idx.size(), n, rng);
    std::vector<int> labels(m);
    for (auto& l : labels) l = static_cast<int>(rng.below(n));

    const std::size_t batch = 2, seq = 3, heads = 2, d = 4;
    Tensor q = random_tensor(batch * seq, d, rng);
    Tensor k = random_tensor(batch * seq, d, rng);
    Tensor v = random_tensor(batch * seq, d, rng);
    Tensor ra = random_tensor(batch * seq, d, rng);
    std::vector<std::uint8_t> mask(batch * seq, 1);
    mask[seq - 1] = static_cast<std::uint8_t>(rng.below(2));
    mask[2 * seq - 1] = 0;

    double worst = 0.0;
    auto check = [&](const std::function<NodeId(Graph&)>& f, std::vector<Tensor*> ps) {
        worst = std::max(worst, finite_difference_check(f, ps, kFdEps).max_rel_error);
    };
    check([&](Graph& g) { return probe(g, matmul(g, g.param(a), g.param(b)), rp); }, {&a, &b});
    check([&](Graph& g) { return probe(g, transpose(g, g.param(a)), rt); }, {&a});
    check([&](Graph& g) { return probe(g, add(g, g.param(a), g.param(c)), r); }, {&a, &c});
    check([&](Graph& g) { return probe(g, add_row(g, g.param(a), g.param(bias)), r); }, {&a, &bias});
    check([&](Graph& g) { return probe(g, mul(g, g.param(a), g.param(c)), r); }, {&a, &c});
    check([&](Graph& g) { return probe(g, scale(g, g.param(a), 0.37), r); }, {&a});
    check([&](Graph& g) { return probe(g, relu(g, g.param(kinked)), r); }, {&kinked});
    check([&](Graph& g) { return probe(g, softmax_rows(g, g.param(a)), r); }, {&a});
    check([&](Graph& g) { return probe(g, layer_norm(g, g.param(a), g.param(gamma), g.param(beta), 1e-5), r); },
          {&a, &gamma, &beta});
    check([&](Graph& g) { return probe(g, gather_rows(g, g.param(a), idx), rg); }, {&a});
    check([&](Graph& g) { return probe(g, attention(g, g.param(q), g.param(k), g.param(v), mask, batch, seq, heads), ra); },
          {&q, &k, &v});
    check([&](Graph& g) { return cross_entropy(g, g.param(a), labels); }, {&a});
    check([&](Graph& g) { return sum(g, g.param(a)); }, {&a});
    return worst;
}

TokenBatch random_batch(std::size_t vocab, std::size_t batch, std::size_t seq, SplitMix64& rng,
                        std::size_t min_len = 1) {
    TokenBatch b;
    b.batch = batch;
    b.seq_len = seq;
    for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t len = min_len + rng.below(seq - min_len + 1);
        for (std::size_t t = 0; t < seq; ++t) {
            b.ids.push_back(t == 0 ? Vocab::kCls : t < len ? static_cast<int>(rng.below(vocab)) : Vocab::kPad);
            b.mask.push_back(t < len ? 1 : 0);
        }
        b.labels.push_back(static_cast<int>(rng.below(2)));
    }
    return b;
}

double model_trial(std::uint64_t seed) {
    ModelConfig mc;
    mc.vocab_size = 20;
    mc.d_model = 8;
    mc.n_heads = 2;
    mc.n_layers = 2;
    mc.ff_dim = 16;
    mc.max_seq_len = 6;
    mc.seed = derive_seed(seed, {1});
    LoraConfig lc;
    lc.rank = 2;
    lc.alpha = 3.0;
    lc.targets = {Target::Q, Target::K, Target::V, Target::O, Target::FF1, Target::FF2};
    lc.seed = derive_seed(seed, {2});
    AdaptedModel am(std::make_shared<const EncoderModel>(init_model(mc)), lc);
    SplitMix64 rng(derive_seed(seed, {3}));
    // Nonzero B so every adapter gradient is generic.
    for (auto& ad : am.adapters())
        for (double& x : ad.b.data()) x = rng.uniform(-0.5, 0.5);

    // Resample the batch until every ReLU input sits clear of the kink. Rows
    // hold CLS plus at least one token: a lone CLS attends to itself only, so
    // its key gradient vanishes and the difference quotient is pure roundoff.
    TokenBatch batch;
    for (int attempt = 0;; ++attempt) {
        batch = random_batch(mc.vocab_size, 3, mc.max_seq_len, rng, 2);
        Graph g;
        am.forward(g, batch);
        if (g.relu_margin() > 1e-3 || attempt > 100) break;
    }
    auto build = [&](Graph& g) { return cross_entropy(g, am.forward(g, batch), batch.labels); };
    return finite_difference_check(build, am.trainable(), kFdEps).max_rel_error;
}

Outcome criterion1() {
    const auto start = std::chrono::steady_clock::now();
    double worst_op = 0.0, worst_model = 0.0;
    for (int t = 0; t < kGradTrials; ++t) {
        worst_op = std::max(worst_op, op_trial(derive_seed(1000, {static_cast<std::uint64_t>(t)})));
        worst_model = std::max(worst_model, model_trial(derive_seed(2000, {static_cast<std::uint64_t>(t)})));
    }
    const double elapsed = seconds_since(start);
    return {worst_op < kGradTol && worst_model < kGradTol && elapsed < kGradBudgetS,
            fmt("gradient correctness: max rel err ops %.2e, full model %.2e over %d trials (tol %.0e), %.1fs",
                worst_op, worst_model, kGradTrials, kGradTol, elapsed)};
}

// --- shared experiment helpers ---------------------------------------------

ExperimentConfig desk_config() { return load_config(kConfigDir / "desk_synthetic.json"); }

// --- criterion 2 -----------------------------------------------------------

Outcome criterion2() {
    auto cfg = desk_config();
    const auto prepared = prepare_data(cfg);
    double worst = 0.0;
    for (std::size_t e : {1u, 3u}) {
        cfg.fed.clients = 1;
        cfg.fed.rounds = 1;
        cfg.fed.local_epochs = e;
        const auto spec = cfg.run_spec();
        const auto fed = run_federated(spec, prepared.vocab, prepared.data);
        const auto central = run_centralized(spec, prepared.vocab, prepared.data);
        for (std::size_t i = 0; i < fed.state.theta.size(); ++i)
            worst = std::max(worst, std::abs(fed.state.theta[i] - central.state.theta[i]));
    }
    return {worst < kEquivTol, fmt("centralized equivalence: max |dtheta| %.3e for E in {1,3} (tol %.0e)", worst, kEquivTol)};
}

// --- criterion 3 -----------------------------------------------------------

Outcome criterion3() {
    auto cfg = desk_config();
    cfg.fed.clients = 3;
    cfg.fed.rounds = 3;
    cfg.fed.local_epochs = 2;
    const auto prepared = prepare_data(cfg);
    const auto spec = cfg.run_spec();

    // zero-init no-op
    auto base = std::make_shared<const EncoderModel>(init_model(spec.model));
    AdaptedModel fresh = attach_adapters(base, spec.lora);
    SplitMix64 rng(77);
    bool noop = true;
    for (int t = 0; t < 20; ++t) {
        const auto b = random_batch(spec.model.vocab_size, 4, 1 + rng.below(spec.model.max_seq_len), rng);
        Graph g1, g2;
        noop = noop && g1.value(fresh.forward(g1, b)).same_values(g2.value(base->forward(g2, b)));
    }

    // full run, then frozen base and merge equivalence on the trained model
    const auto run = run_federated(spec, prepared.vocab, prepared.data);
    const auto reference = init_model(spec.model);
    const auto pa = run.model.base().parameters();
    const auto pb = reference.parameters();
    bool frozen = pa.size() == pb.size();
    for (std::size_t i = 0; frozen && i < pa.size(); ++i) frozen = pa[i].tensor->same_values(*pb[i].tensor);

    AdaptedModel trained = run.model;
    const auto merged = merge_adapters(trained);
    double merge_gap = 0.0;
    for (int t = 0; t < kMergeBatches; ++t) {
        const auto b = random_batch(spec.model.vocab_size, 8, 1 + rng.below(spec.model.max_seq_len), rng);
        Graph g1, g2;
        const Tensor& x = g1.value(trained.forward(g1, b));
        const Tensor& y = g2.value(merged.forward(g2, b));
        for (std::size_t i = 0; i < x.size(); ++i) merge_gap = std::max(merge_gap, std::abs(x.data()[i] - y.data()[i]));
    }

    // count formula
    const auto counts = trainable_param_count(run.model);
    std::size_t expected_adapters = 0;
    for (const auto& ad : run.model.adapters()) expected_adapters += ad.rank() * (ad.in_dim() + ad.out_dim());
    const std::size_t expected_head = spec.model.d_model * spec.model.n_classes + spec.model.n_classes;
    const std::size_t desk_formula = spec.model.n_layers * spec.lora.targets.size() * spec.lora.rank *
                                     (2 * spec.model.d_model);
    const bool counted = counts.adapter_params == expected_adapters && counts.adapter_params == desk_formula &&
                         counts.trainable == expected_adapters + expected_head &&
                         run.state.theta.size() == counts.trainable;

    ModelConfig wide;
    wide.vocab_size = 8;
    wide.d_model = 768;
    wide.n_heads = 1;
    wide.n_layers = 1;
    wide.ff_dim = 8;
    wide.max_seq_len = 4;
    LoraConfig one;
    one.rank = 8;
    one.targets = {Target::Q};
    const auto wide_counts = trainable_param_count(attach_adapters(std::make_shared<const EncoderModel>(init_model(wide)), one));
    const bool wide_example = wide_counts.adapter_params == 12288 && wide_counts.dense_params == 589824;

    return {noop && frozen && merge_gap < kMergeTol && counted && wide_example,
            fmt("lora invariants: zero-init no-op %s, frozen base %s, merge gap %.2e over %d batches (tol %.0e), "
                "count %zu = sum r(d+k) %zu + head %zu %s, d=k=768 r=8: %zu vs %zu dense",
                noop ? "exact" : "BROKEN", frozen ? "bit-identical" : "CHANGED", merge_gap, kMergeBatches, kMergeTol,
                counts.trainable, expected_adapters, expected_head, counted ? "ok" : "MISMATCH",
                wide_counts.adapter_params, wide_counts.dense_params)};
}

// --- criterion 4 -----------------------------------------------------------

Outcome criterion4() {
    SplitMix64 rng(404);
    double mean_gap = 0.0, perm_gap = 0.0;
    bool identity = true;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 1 + rng.below(10), n = 1 + rng.below(300);
        std::vector<TrainableVector> thetas(k, TrainableVector(n));
        for (auto& t : thetas)
            for (double& x : t) x = rng.uniform(-10, 10);
        const auto avg = fedavg(thetas);
        for (std::size_t i = 0; i < n; ++i) {
            long double total = 0.0L;
            for (const auto& t : thetas) total += t[i];
            mean_gap = std::max(mean_gap, static_cast<double>(std::abs(total / k - avg[i])));
        }
        auto shuffled = thetas;
        rng.shuffle(std::span<TrainableVector>(shuffled));
        const auto avg2 = fedavg(shuffled);
        for (std::size_t i = 0; i < n; ++i) perm_gap = std::max(perm_gap, std::abs(avg[i] - avg2[i]));
        identity = identity && fedavg(std::span<const TrainableVector>(thetas.data(), 1)) == thetas[0];
    }
    return {mean_gap < kFedAvgTol && perm_gap < kFedAvgTol && identity,
            fmt("fedavg oracle: brute-force gap %.2e, permutation gap %.2e (tol %.0e), K=1 identity %s", mean_gap,
                perm_gap, kFedAvgTol, identity ? "exact" : "BROKEN")};
}

// --- criterion 5 -----------------------------------------------------------

Outcome criterion5() {
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = desk_config();
    const auto prepared = prepare_data(cfg);
    const auto run = run_federated(cfg.run_spec(), prepared.vocab, prepared.data);
    const double elapsed = seconds_since(start);
    const auto& last = run.state.history.back();
    const double acc = last.eval_accuracy.value_or(0.0), f1 = last.eval_f1.value_or(0.0);
    return {acc >= kDeskMinAccuracy && f1 >= kDeskMinF1 && elapsed < kDeskBudgetS,
            fmt("desk-scale learning: K=%zu R=%zu E=%zu eta=%g batch=%zu -> eval accuracy %.4f, F1 %.4f "
                "(need >= %.2f), %.1fs",
                cfg.fed.clients, cfg.fed.rounds, cfg.fed.local_epochs, cfg.fed.eta, cfg.fed.batch_size, acc, f1,
                kDeskMinAccuracy, elapsed)};
}

// --- criterion 6 -----------------------------------------------------------

Outcome criterion6() {
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = load_config(kConfigDir / "ablation_label_skew.json");
    const std::vector<GridCell> grid = {{3, 10, 3}, {1, 10, 3}, {1, 3, 10}};
    std::vector<std::uint64_t> seeds;
    for (int s = 1; s <= kTrendSeeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    std::ostringstream log;
    const auto rows = run_ablation(cfg, grid, seeds, log, 0);
    int wins = 0, first_holds = 0, second_holds = 0;
    std::string per_seed;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto& a = rows[s * 3 + 0];
        const auto& b = rows[s * 3 + 1];
        const auto& c = rows[s * 3 + 2];
        const bool ok = a.ok && b.ok && c.ok;
        const bool first = ok && a.eval_f1 > b.eval_f1;
        const bool second = ok && b.eval_f1 > c.eval_f1;
        first_holds += first;
        second_holds += second;
        wins += first && second;
        per_seed += fmt(" [seed %llu: %.4f %.4f %.4f]", static_cast<unsigned long long>(seeds[s]), a.eval_f1,
                        b.eval_f1, c.eval_f1);
    }
    const double elapsed = seconds_since(start);
    return {wins >= kTrendMinWins && elapsed < kTrendBudgetS,
            fmt("ablation trend F1(3,10,3) > F1(1,10,3) > F1(1,3,10): %d/%d seeds (need %d); first > held %d, "
                "second > held %d;%s %.1fs",
                wins, kTrendSeeds, kTrendMinWins, first_holds, second_holds, per_seed.c_str(), elapsed)};
}

// --- criterion 7 -----------------------------------------------------------

Outcome criterion7() {
    SplitMix64 rng(707);
    const auto all = synth_corpus(90, 3);
    const auto split = split_train_eval(all, 0.2, 4);
    const ExperimentData data{split.train, split.eval};
    int exact = 0;
    std::string failures;
    for (int trial = 0; trial < kCommConfigs; ++trial) {
        RunSpec spec;
        spec.model.vocab_size = 128;
        spec.model.n_heads = 2;
        spec.model.d_model = 4 * (2 + rng.below(4));
        spec.model.n_layers = 1 + rng.below(2);
        spec.model.ff_dim = 8 + rng.below(12);
        spec.model.max_seq_len = 20;
        spec.model.seed = rng.next();
        spec.lora.rank = 1 + rng.below(3);
        spec.lora.targets.clear();
        for (Target t : kAllTargets)
            if (rng.below(2) == 0) spec.lora.targets.push_back(t);
        if (spec.lora.targets.empty()) spec.lora.targets.push_back(Target::V);
        spec.fed.clients = 1 + rng.below(5);
        spec.fed.rounds = 1 + rng.below(2);
        spec.fed.local_epochs = 1;
        spec.fed.batch_size = 16;
        spec.fed.seed = rng.next();
        spec.partition.clients = 0;
        const Vocab vocab = build_vocab(data.pool, spec.model.vocab_size);
        const auto run = run_federated(spec, vocab, data);

        // independent arithmetic: sum over targeted matrices of r (d + k), plus the head
        std::size_t n = 0;
        for (Target t : spec.lora.targets) {
            const std::size_t d = t == Target::FF2 ? spec.model.ff_dim : spec.model.d_model;
            const std::size_t k = t == Target::FF1 ? spec.model.ff_dim : spec.model.d_model;
            n += spec.lora.rank * (d + k);
        }
        n = n * spec.model.n_layers + spec.model.d_model * 2 + 2;
        bool ok = run.params.trainable == n;
        for (const auto& r : run.state.history) ok = ok && r.uplink_bytes == spec.fed.clients * n * 4;
        exact += ok;
        if (!ok) failures += fmt(" config %d", trial);
    }

    double worst_ratio = 0.0;
    for (const char* name : {"desk_synthetic.json", "ablation_label_skew.json"}) {
        const auto cfg = load_config(kConfigDir / name);
        const auto am = attach_adapters(std::make_shared<const EncoderModel>(init_model(cfg.model)), cfg.lora);
        worst_ratio = std::max(worst_ratio, trainable_param_count(am).trainable_ratio());
    }
    return {exact == kCommConfigs && worst_ratio < kMaxTrainableRatio,
            fmt("communication accounting: uplink = K*n*4 exact in %d/%d configs%s; desk trainable/total ratio %.4f "
                "(need < %.2f)",
                exact, kCommConfigs, failures.c_str(), worst_ratio, kMaxTrainableRatio)};
}

// --- criterion 8 -----------------------------------------------------------

Outcome criterion8() {
    SplitMix64 rng(808);
    int sound = 0;
    for (int trial = 0; trial < kPartitionSpecs; ++trial) {
        const std::size_t n = 10 + rng.below(400);
        std::vector<Record> records(n);
        for (std::size_t i = 0; i < n; ++i) {
            records[i].id = static_cast<std::int64_t>(i);
            records[i].text = "r" + std::to_string(i);
            records[i].label = rng.uniform() < 0.5 ? 1 : 0;
        }
        PartitionSpec spec;
        spec.clients = 1 + rng.below(std::min<std::size_t>(n, 10));
        spec.seed = rng.next();
        const auto kind = rng.below(3);
        spec.strategy = kind == 0 ? PartitionStrategy::Iid
                        : kind == 1 ? PartitionStrategy::LabelSkew
                                    : PartitionStrategy::QuantitySkew;
        spec.alpha = rng.uniform(0.05, 5.0);
        if (spec.strategy == PartitionStrategy::QuantitySkew) {
            double total = 0.0;
            for (std::size_t c = 0; c < spec.clients; ++c) total += spec.ratios.emplace_back(rng.uniform(0.05, 1.0));
            for (double& r : spec.ratios) r /= total;
        }
        const auto parts = partition_clients(records, spec);
        std::multiset<std::int64_t> seen;
        for (const auto& p : parts)
            for (const auto& r : p) seen.insert(r.id);
        bool ok = parts.size() == spec.clients && seen.size() == n &&
                  std::set<std::int64_t>(seen.begin(), seen.end()).size() == n &&
                  partition_clients(records, spec) == parts;
        sound += ok;
    }

    std::string dreaddit = "Dreaddit check skipped (DREADDIT_DIR not set)";
    bool dreaddit_ok = true;
    if (const char* dir = std::getenv("DREADDIT_DIR"); dir != nullptr && *dir != '\0') {
        std::size_t total = 0;
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) total += load_corpus(f).size();
        dreaddit_ok = total == kDreadditTotal;
        dreaddit = fmt("Dreaddit corpus %zu labeled segments from %zu file(s) (expect %zu)", total, files.size(),
                       kDreadditTotal);
    }
    return {sound == kPartitionSpecs && dreaddit_ok,
            fmt("data pipeline: %d/%d random partition specs sound; %s", sound, kPartitionSpecs, dreaddit.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                            criterion5, criterion6, criterion7, criterion8};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::printf("criterion %d %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
