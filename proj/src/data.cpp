// SPDX-License-Identifier: Apache-2.0
#include "fedlora/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string_view>

#include "fedlora/errors.hpp"
#include "fedlora/rng.hpp"

namespace fedlora {

namespace {

constexpr std::array<std::string_view, 5> kDomains = {"interpersonal_conflict", "mental_illness", "financial_need",
                                                      "ptsd", "social"};

constexpr std::array<std::string_view, 24> kStressWords = {
    "anxious", "panic",   "deadline", "overwhelmed", "scared",   "worried",  "exhausted", "afraid",
    "crying",  "pressure", "terrified", "nervous",   "rent",     "debt",     "fired",     "argument",
    "nightmare", "insomnia", "alone",  "hopeless",    "stressed", "trauma",   "bills",     "eviction"};

constexpr std::array<std::string_view, 24> kCalmWords = {
    "relaxed", "calm",    "grateful", "happy",  "peaceful", "enjoyed",     "friends", "weekend",
    "vacation", "garden", "laughed",  "cozy",   "sunny",    "proud",       "hobby",   "music",
    "coffee",  "hiking",  "support",  "celebrate", "comfortable", "rested", "cheerful", "thankful"};

constexpr std::array<std::string_view, 64> kFillerWords = {
    "i",     "the",    "a",     "and",   "to",       "my",     "was",   "it",     "that",  "of",    "in",
    "me",    "for",    "with",  "have",  "this",     "but",    "just",  "so",     "we",    "he",    "she",
    "they",  "at",     "on",    "about", "when",     "been",   "today", "yesterday", "work", "home", "time",
    "really", "feel",  "think", "know",  "going",    "day",    "week",  "night",  "people", "family", "said",
    "got",   "still",  "even",  "after", "before",   "again",  "much",  "little", "thing", "things", "get",
    "make",  "out",    "up",    "now",   "then",     "some",   "what",  "how",    "all"};

constexpr double kKeywordProbability = 0.5;
constexpr std::size_t kMinWords = 8;
constexpr std::size_t kMaxWords = 16;

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// floor(n * p_k) each, then the leftover units go to the largest fractional
// parts (lower index wins ties).
std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> proportions) {
    const std::size_t k = proportions.size();
    std::vector<std::size_t> counts(k);
    std::vector<double> frac(k);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = static_cast<double>(n) * proportions[i];
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        frac[i] = exact - std::floor(exact);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < n; i = (i + 1) % k, ++assigned) ++counts[order[i]];
    while (assigned > n) {
        // Floating-point overshoot; take back from the largest count.
        auto it = std::max_element(counts.begin(), counts.end());
        --*it;
        --assigned;
    }
    return counts;
}

std::vector<std::vector<Record>> gather(std::span<const Record> records, std::vector<std::vector<std::size_t>> owners) {
    std::vector<std::vector<Record>> out(owners.size());
    for (std::size_t c = 0; c < owners.size(); ++c) {
        std::sort(owners[c].begin(), owners[c].end());
        out[c].reserve(owners[c].size());
        for (std::size_t idx : owners[c]) out[c].push_back(records[idx]);
    }
    return out;
}

}  // namespace

std::span<const std::string_view> dreaddit_domains() { return kDomains; }

void PartitionSpec::validate() const {
    if (clients < 1) throw ConfigError("partition.clients must be at least 1");
    if (strategy == PartitionStrategy::LabelSkew && !(alpha > 0.0)) {
        throw ConfigError("partition.alpha must be positive");
    }
    if (strategy == PartitionStrategy::QuantitySkew) {
        if (ratios.size() != clients) {
            throw ConfigError("partition.ratios needs one entry per client (" + std::to_string(clients) + ")");
        }
        double total = 0.0;
        for (double r : ratios) {
            if (!(r >= 0.0)) throw ConfigError("partition.ratios must be non-negative");
            total += r;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError("partition.ratios must sum to 1");
    }
}

std::string to_string(PartitionStrategy s) {
    switch (s) {
        case PartitionStrategy::Iid: return "iid";
        case PartitionStrategy::LabelSkew: return "label_skew";
        case PartitionStrategy::QuantitySkew: return "quantity_skew";
    }
    return "iid";
}

PartitionStrategy parse_partition_strategy(std::string_view name) {
    if (name == "iid") return PartitionStrategy::Iid;
    if (name == "label_skew") return PartitionStrategy::LabelSkew;
    if (name == "quantity_skew") return PartitionStrategy::QuantitySkew;
    throw ConfigError("unknown partition strategy '" + std::string(name) + "'");
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    char ch = 0;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };
    while (in.get(ch)) {
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (!field_started && field.empty()) {
                    quoted = true;
                    field_started = true;
                } else {
                    field.push_back(ch);
                }
                break;
            case ',':
                end_field();
                break;
            case '\r':
                if (in.peek() == '\n') in.get(ch);
                end_row();
                break;
            case '\n':
                end_row();
                break;
            default:
                field.push_back(ch);
                field_started = true;
        }
    }
    if (quoted) throw DataError("unterminated quoted CSV field");
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

void write_csv_row(std::ostream& out, std::span<const std::string> fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out << ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\r\n") == std::string::npos) {
            out << f;
            continue;
        }
        out << '"';
        for (char c : f) {
            if (c == '"') out << '"';
            out << c;
        }
        out << '"';
    }
    out << '\n';
}

std::vector<Record> read_corpus(std::istream& in) {
    const auto rows = parse_csv(in);
    if (rows.empty()) throw SchemaError("corpus has no header row");
    const auto& header = rows.front();
    auto column = [&](std::string_view name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (lower(trim(header[i])) == name) return i;
        }
        return std::nullopt;
    };
    const auto text_col = column("text");
    if (!text_col) throw SchemaError("corpus is missing required column 'text'");
    const auto label_col = column("label");
    if (!label_col) throw SchemaError("corpus is missing required column 'label'");
    const auto id_col = column("id");
    auto domain_col = column("domain");
    if (!domain_col) domain_col = column("subreddit");

    std::vector<Record> records;
    records.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::string where = "data row " + std::to_string(r);
        const std::size_t needed = std::max(*text_col, *label_col) + 1;
        if (row.size() < needed) throw DataError(where + " has " + std::to_string(row.size()) + " fields");
        Record rec;
        const std::string label = trim(row[*label_col]);
        if (label == "0") {
            rec.label = 0;
        } else if (label == "1") {
            rec.label = 1;
        } else {
            throw DataError(where + " has label '" + label + "', expected 0 or 1");
        }
        rec.text = row[*text_col];
        if (trim(rec.text).empty()) throw DataError(where + " has empty text");
        rec.id = static_cast<std::int64_t>(r - 1);
        if (id_col && *id_col < row.size() && !trim(row[*id_col]).empty()) {
            try {
                rec.id = std::stoll(trim(row[*id_col]));
            } catch (const std::exception&) {
                throw DataError(where + " has non-integer id '" + row[*id_col] + "'");
            }
        }
        if (domain_col && *domain_col < row.size() && !row[*domain_col].empty()) rec.domain = row[*domain_col];
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<Record> load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file " + path.string());
    return read_corpus(in);
}

void write_corpus(const std::filesystem::path& path, std::span<const Record> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file " + path.string());
    const std::vector<std::string> header = {"id", "text", "label", "domain"};
    write_csv_row(out, header);
    for (const auto& r : records) {
        const std::vector<std::string> row = {std::to_string(r.id), r.text, std::to_string(r.label),
                                              r.domain.value_or("")};
        write_csv_row(out, row);
    }
}

TrainEvalSplit split_train_eval(std::span<const Record> records, double eval_frac, std::uint64_t seed) {
    if (!(eval_frac > 0.0 && eval_frac < 1.0)) throw ConfigError("eval_frac must lie strictly between 0 and 1");
    const std::size_t n = records.size();
    if (n < 2) throw DataError("cannot split " + std::to_string(n) + " record(s) into train and eval");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_eval = std::min<std::size_t>(
        static_cast<std::size_t>(std::ceil(static_cast<double>(n) * eval_frac)), n - 1);
    TrainEvalSplit out;
    out.eval.reserve(n_eval);
    out.train.reserve(n - n_eval);
    for (std::size_t i = 0; i < n; ++i) {
        (i < n_eval ? out.eval : out.train).push_back(records[order[i]]);
    }
    return out;
}

std::vector<std::vector<Record>> partition_clients(std::span<const Record> records, const PartitionSpec& spec) {
    spec.validate();
    const std::size_t n = records.size();
    const std::size_t k = spec.clients;
    if (n < k) {
        throw DataError("cannot partition " + std::to_string(n) + " records across " + std::to_string(k) +
                        " clients");
    }
    SplitMix64 rng(spec.seed);
    std::vector<std::vector<std::size_t>> owners(k);

    switch (spec.strategy) {
        case PartitionStrategy::Iid: {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(std::span<std::size_t>(order));
            for (std::size_t i = 0; i < n; ++i) owners[i % k].push_back(order[i]);
            break;
        }
        case PartitionStrategy::LabelSkew: {
            std::vector<int> labels;
            for (const auto& r : records) labels.push_back(r.label);
            std::sort(labels.begin(), labels.end());
            labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
            for (int label : labels) {
                std::vector<std::size_t> members;
                for (std::size_t i = 0; i < n; ++i)
                    if (records[i].label == label) members.push_back(i);
                rng.shuffle(std::span<std::size_t>(members));
                std::vector<double> props(k);
                double total = 0.0;
                for (auto& p : props) {
                    p = rng.gamma(spec.alpha);
                    total += p;
                }
                if (total > 0.0) {
                    for (auto& p : props) p /= total;
                } else {
                    std::fill(props.begin(), props.end(), 1.0 / static_cast<double>(k));
                }
                const auto counts = largest_remainder(members.size(), props);
                std::size_t pos = 0;
                for (std::size_t c = 0; c < k; ++c)
                    for (std::size_t j = 0; j < counts[c]; ++j) owners[c].push_back(members[pos++]);
            }
            break;
        }
        case PartitionStrategy::QuantitySkew: {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), 0);
            rng.shuffle(std::span<std::size_t>(order));
            const auto counts = largest_remainder(n, spec.ratios);
            std::size_t pos = 0;
            for (std::size_t c = 0; c < k; ++c)
                for (std::size_t j = 0; j < counts[c]; ++j) owners[c].push_back(order[pos++]);
            break;
        }
    }
    return gather(records, std::move(owners));
}

ClientShard make_shard(std::size_t client_id, std::span<const Record> records, double eval_frac, std::uint64_t seed) {
    ClientShard shard;
    shard.client_id = client_id;
    if (records.size() < 2) {
        shard.train.assign(records.begin(), records.end());
        return shard;
    }
    auto split = split_train_eval(records, eval_frac, seed);
    shard.train = std::move(split.train);
    shard.eval = std::move(split.eval);
    return shard;
}

std::vector<Record> synth_corpus(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("synthetic corpus needs at least 2 records");
    SplitMix64 rng(seed);
    std::vector<Record> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const auto& pool = label == 1 ? kStressWords : kCalmWords;
        const std::size_t words = kMinWords + static_cast<std::size_t>(rng.below(kMaxWords - kMinWords + 1));
        std::string text;
        for (std::size_t w = 0; w < words; ++w) {
            if (w > 0) text.push_back(' ');
            if (rng.uniform() < kKeywordProbability) {
                text += pool[rng.below(pool.size())];
            } else {
                text += kFillerWords[rng.below(kFillerWords.size())];
            }
        }
        Record r;
        r.id = static_cast<std::int64_t>(i);
        r.text = std::move(text);
        r.label = label;
        r.domain = std::string(kDomains[i % kDomains.size()]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace fedlora
