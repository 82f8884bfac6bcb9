// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedlora {

/// One labeled segment. label 1 = stressful, 0 = non-stressful.
struct Record {
    std::int64_t id = 0;
    std::string text;
    int label = 0;
    std::optional<std::string> domain;

    friend bool operator==(const Record&, const Record&) = default;
};

/// D_k: one client's local records, split into disjoint train/eval parts.
struct ClientShard {
    std::size_t client_id = 0;
    std::vector<Record> train;
    std::vector<Record> eval;
};

enum class PartitionStrategy { Iid, LabelSkew, QuantitySkew };

struct PartitionSpec {
    std::size_t clients = 1;
    PartitionStrategy strategy = PartitionStrategy::Iid;
    double alpha = 0.5;          // Dirichlet concentration, label_skew only
    std::vector<double> ratios;  // quantity_skew only; one per client, sums to 1
    std::uint64_t seed = 0;

    void validate() const;
};

/// RFC-4180 reader: quoted fields may hold commas, doubled quotes and
/// newlines. Returns every row including the header.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);
void write_csv_row(std::ostream& out, std::span<const std::string> fields);

/// Reads a CSV with a header that names at least `text` and `label`.
/// Optional columns: `id` (defaults to the 0-based data row index) and
/// `domain` or `subreddit`. Other columns are ignored.
std::vector<Record> load_corpus(const std::filesystem::path& path);
std::vector<Record> read_corpus(std::istream& in);
/// Writes id,text,label,domain in the format load_corpus reads.
void write_corpus(const std::filesystem::path& path, std::span<const Record> records);

struct TrainEvalSplit {
    std::vector<Record> train;
    std::vector<Record> eval;
};

/// Seeded shuffle, then ceil(n * eval_frac) records (capped at n - 1) go to eval.
TrainEvalSplit split_train_eval(std::span<const Record> records, double eval_frac, std::uint64_t seed);

/// Disjoint per-client record lists whose union is the input. Each list keeps
/// the input's relative order, so clients == 1 returns the input unchanged.
std::vector<std::vector<Record>> partition_clients(std::span<const Record> records, const PartitionSpec& spec);

/// Splits one client's records into a shard. Fewer than two records cannot be
/// split; they all land in train.
ClientShard make_shard(std::size_t client_id, std::span<const Record> records, double eval_frac, std::uint64_t seed);

/// Balanced two-class corpus: each word is drawn from the label's keyword
/// pool with probability 0.5, otherwise from a shared filler pool. Texts hold
/// 8 to 16 words. Domains cycle through the five Dreaddit domains.
std::vector<Record> synth_corpus(std::size_t n, std::uint64_t seed);

/// The five labeled Dreaddit domains.
std::span<const std::string_view> dreaddit_domains();

std::string to_string(PartitionStrategy s);
PartitionStrategy parse_partition_strategy(std::string_view name);

}  // namespace fedlora
