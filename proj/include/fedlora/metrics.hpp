// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace fedlora {

/// Binary confusion counts with class 1 (stressful) as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// Throws ProtocolError on length mismatch, DataError on labels outside {0,1}.
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds);

/// Positive-class F1. Conventions for empty denominators: 1.0 when
/// tp = fp = fn = 0 (all-negative set predicted all-negative), 0.0 whenever
/// tp = 0 and there are errors.
double f1_binary(const ConfusionMatrix& m);

/// (tp + tn) / total; DataError on an empty matrix.
double accuracy(const ConfusionMatrix& m);

}  // namespace fedlora
