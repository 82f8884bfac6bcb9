// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fedlora/data.hpp"

namespace fedlora {

/// Word-level vocabulary. Ids 0..2 are reserved for PAD, UNK and CLS; corpus
/// tokens start at 3.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr std::size_t kReserved = 3;

    Vocab();
    /// Tokens listed in id order starting at id 3.
    explicit Vocab(std::vector<std::string> tokens);

    int id(std::string_view token) const;
    const std::string& token(int id) const;
    /// Includes the reserved ids.
    std::size_t size() const { return id_to_token_.size(); }
    std::span<const std::string> corpus_tokens() const;

    /// One token per line; line i (0-based) holds id i + 3.
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.id_to_token_ == b.id_to_token_; }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

/// Lowercases ASCII and splits on whitespace and ASCII punctuation other than
/// the apostrophe. Bytes >= 0x80 are kept inside words.
std::vector<std::string> split_words(std::string_view text);

/// Ranks words by frequency (ties lexicographic) and keeps the top
/// max_size - 3.
Vocab build_vocab(std::span<const Record> corpus, std::size_t max_size);

struct Encoded {
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
};

/// [CLS] + token ids, truncated to max_len, right-padded with PAD to max_len.
Encoded tokenize(std::string_view text, const Vocab& vocab, std::size_t max_len);

/// Row-major batch of equal-length sequences.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t seq_len = 0;
    std::vector<int> ids;
    std::vector<std::uint8_t> mask;
    std::vector<int> labels;
};

/// CLS + token ids truncated to max_len, unpadded.
struct EncodedRecord {
    std::vector<int> ids;
    int label = 0;
};

EncodedRecord encode_record(const Record& record, const Vocab& vocab, std::size_t max_len);

/// Right-pads pre-encoded records to the longest among them.
TokenBatch collate(std::span<const EncodedRecord* const> items);

/// Tokenizes the records padded to the longest sequence in the group, capped
/// at max_len.
TokenBatch make_batch(std::span<const Record* const> records, const Vocab& vocab, std::size_t max_len);
TokenBatch make_batch(std::span<const Record> records, const Vocab& vocab, std::size_t max_len);

}  // namespace fedlora
