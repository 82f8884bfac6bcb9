// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace fedlora {

/// SplitMix64 (Steele, Lea & Flood 2014). The state advances by the golden
/// gamma 0x9E3779B97F4A7C15 and each output is finalized with the multipliers
/// 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB (shifts 30, 27, 31).
///
/// Every seeded operation in the library draws from this generator and from
/// the distributions defined below rather than from <random> distributions,
/// whose outputs are implementation-defined. Seeds therefore reproduce the
/// same streams on every platform and in ports to other languages.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();

    /// Uniform in [0, 1) with 53 bits: (next() >> 11) * 2^-53.
    double uniform();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n) by rejection; n > 0.
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via the Marsaglia polar method (second value discarded).
    double normal();
    /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 uses the U^(1/shape) boost.
    double gamma(double shape);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// The SplitMix64 finalizer applied to a single value.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent child seed from a base seed and a tag path,
/// e.g. derive_seed(fed_seed, {kShuffleTag, client, round, epoch}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

}  // namespace fedlora
