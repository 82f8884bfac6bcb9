// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "fedlora/errors.hpp"
#include "fedlora/tensor.hpp"

namespace fedlora::detail {

// Explicit little-endian encoding so checkpoints do not depend on host order.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw DataError("cannot write " + path.string());
    }

    void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }

    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

    void tensor(const Tensor& t) {
        for (double v : t.data()) f64(v);
    }

    void finish() {
        out_.flush();
        if (!out_) throw DataError("failed writing " + path_.string());
    }

private:
    void put(std::uint64_t v, int bytes) {
        std::array<char, 8> buf{};
        for (int i = 0; i < bytes; ++i) buf[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out_.write(buf.data(), bytes);
    }

    std::ofstream out_;
    std::filesystem::path path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw DataError("cannot read " + path.string());
    }

    void expect_magic(std::string_view m) {
        std::string buf(m.size(), '\0');
        in_.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!in_ || buf != m) throw SchemaError(path_.string() + " is not a " + std::string(m) + " file");
    }

    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }

    void tensor(Tensor& t) {
        for (double& v : t.data()) v = f64();
    }

    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) throw SchemaError(path_.string() + " has trailing bytes");
    }

private:
    std::uint64_t get(int bytes) {
        std::array<unsigned char, 8> buf{};
        in_.read(reinterpret_cast<char*>(buf.data()), bytes);
        if (!in_) throw SchemaError(path_.string() + " is truncated");
        std::uint64_t v = 0;
        for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | buf[static_cast<std::size_t>(i)];
        return v;
    }

    std::ifstream in_;
    std::filesystem::path path_;
};

}  // namespace fedlora::detail
