// SPDX-License-Identifier: Apache-2.0
#include "fedlora/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "fedlora/errors.hpp"

namespace fedlora {

namespace {

bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c == '\'' || c >= 0x80;
}

}  // namespace

Vocab::Vocab() : id_to_token_{"[PAD]", "[UNK]", "[CLS]"} {}

Vocab::Vocab(std::vector<std::string> tokens) : Vocab() {
    for (auto& t : tokens) {
        const int id = static_cast<int>(id_to_token_.size());
        if (!token_to_id_.emplace(t, id).second) throw DataError("duplicate vocabulary token '" + t + "'");
        id_to_token_.push_back(std::move(t));
    }
}

int Vocab::id(std::string_view token) const {
    const auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw DataError("token id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::span<const std::string> Vocab::corpus_tokens() const {
    return std::span<const std::string>(id_to_token_).subspan(kReserved);
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary " + path.string());
    for (const auto& t : corpus_tokens()) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return Vocab(std::move(tokens));
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

Vocab build_vocab(std::span<const Record> corpus, std::size_t max_size) {
    if (max_size < Vocab::kReserved) throw ConfigError("vocabulary max size must be at least 3");
    if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& r : corpus)
        for (auto& w : split_words(r.text)) ++counts[std::move(w)];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    // std::map iteration is already lexicographic, so a stable sort by count keeps the tie order.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    const std::size_t keep = std::min(ranked.size(), max_size - Vocab::kReserved);
    std::vector<std::string> tokens;
    tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) tokens.push_back(std::move(ranked[i].first));
    return Vocab(std::move(tokens));
}

Encoded tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len) {
    Encoded out;
    out.ids.assign(max_len, Vocab::kPad);
    out.mask.assign(max_len, 0);
    if (max_len == 0) return out;
    out.ids[0] = Vocab::kCls;
    out.mask[0] = 1;
    std::size_t pos = 1;
    for (const auto& w : split_words(text)) {
        if (pos >= max_len) break;
        out.ids[pos] = vocab.id(w);
        out.mask[pos] = 1;
        ++pos;
    }
    return out;
}

EncodedRecord encode_record(const Record& record, const Vocab& vocab, std::size_t max_len) {
    if (max_len == 0) throw ConfigError("sequence max length must be at least 1");
    EncodedRecord out;
    out.label = record.label;
    out.ids.push_back(Vocab::kCls);
    for (const auto& w : split_words(record.text)) {
        if (out.ids.size() >= max_len) break;
        out.ids.push_back(vocab.id(w));
    }
    return out;
}

TokenBatch collate(std::span<const EncodedRecord* const> items) {
    TokenBatch b;
    b.batch = items.size();
    b.seq_len = 1;
    for (const auto* item : items) b.seq_len = std::max(b.seq_len, item->ids.size());
    b.ids.assign(b.batch * b.seq_len, Vocab::kPad);
    b.mask.assign(b.batch * b.seq_len, 0);
    b.labels.reserve(b.batch);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& ids = items[i]->ids;
        std::copy(ids.begin(), ids.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.seq_len));
        std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(i * b.seq_len), ids.size(), std::uint8_t{1});
        b.labels.push_back(items[i]->label);
    }
    return b;
}

TokenBatch make_batch(std::span<const Record* const> records, const Vocab& vocab, std::size_t max_len) {
    std::vector<EncodedRecord> encoded;
    encoded.reserve(records.size());
    for (const Record* r : records) encoded.push_back(encode_record(*r, vocab, max_len));
    std::vector<const EncodedRecord*> ptrs;
    ptrs.reserve(encoded.size());
    for (const auto& e : encoded) ptrs.push_back(&e);
    return collate(ptrs);
}

TokenBatch make_batch(std::span<const Record> records, const Vocab& vocab, std::size_t max_len) {
    std::vector<const Record*> ptrs;
    ptrs.reserve(records.size());
    for (const auto& r : records) ptrs.push_back(&r);
    return make_batch(ptrs, vocab, max_len);
}

}  // namespace fedlora
