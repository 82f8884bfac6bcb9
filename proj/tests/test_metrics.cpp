// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include "doctest.h"
#include "fedlora/errors.hpp"
#include "fedlora/metrics.hpp"
#include "fedlora/rng.hpp"

using namespace fedlora;

TEST_CASE("confusion counts") {
    const std::vector<int> a = {1, 0};
    CHECK(confusion(a, a) == ConfusionMatrix{1, 0, 0, 1});
    const std::vector<int> p = {1, 1};
    const std::vector<int> g = {0, 0};
    CHECK(confusion(p, g).fp == 2);
    const std::vector<int> shorter = {1};
    CHECK_THROWS_AS(confusion(p, shorter), ProtocolError);
    const std::vector<int> bad = {1, 2};
    CHECK_THROWS_AS(confusion(bad, g), DataError);

    SplitMix64 rng(8);
    std::vector<int> pred(1000), gold(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        pred[i] = static_cast<int>(rng.below(2));
        gold[i] = static_cast<int>(rng.below(2));
    }
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
        if (pred[i] && gold[i]) ++tp;
        if (pred[i] && !gold[i]) ++fp;
        if (!pred[i] && gold[i]) ++fn;
        if (!pred[i] && !gold[i]) ++tn;
    }
    CHECK(confusion(pred, gold) == ConfusionMatrix{tp, fp, fn, tn});

    // order does not matter
    std::vector<std::size_t> perm(1000);
    for (std::size_t i = 0; i < 1000; ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<int> pp(1000), gg(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        pp[i] = pred[perm[i]];
        gg[i] = gold[perm[i]];
    }
    CHECK(confusion(pp, gg) == confusion(pred, gold));
}

TEST_CASE("f1 and accuracy") {
    CHECK(f1_binary({2, 1, 1, 0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(f1_binary({0, 0, 0, 7}) == 1.0);
    CHECK(f1_binary({0, 3, 0, 1}) == 0.0);
    CHECK(f1_binary({0, 0, 3, 1}) == 0.0);
    CHECK(accuracy({5, 0, 0, 5}) == 1.0);
    CHECK(accuracy({1, 1, 1, 1}) == 0.5);
    CHECK_THROWS_AS(accuracy({0, 0, 0, 0}), DataError);

    SplitMix64 rng(12);
    for (int i = 0; i < 1000; ++i) {
        const ConfusionMatrix m{rng.below(20), rng.below(20), rng.below(20), rng.below(20) + 1};
        const double f = f1_binary(m);
        const double acc = accuracy(m);
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
        const ConfusionMatrix swapped{m.tp, m.fn, m.fp, m.tn};
        if (m.fp == m.fn) CHECK(f1_binary(swapped) == f);
    }
}
