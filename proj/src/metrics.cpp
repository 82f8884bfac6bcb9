// SPDX-License-Identifier: Apache-2.0
#include "fedlora/metrics.hpp"

#include <string>

#include "fedlora/errors.hpp"

namespace fedlora {

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds) {
    if (preds.size() != golds.size()) {
        throw ProtocolError("confusion needs equal lengths, got " + std::to_string(preds.size()) + " predictions and " +
                            std::to_string(golds.size()) + " labels");
    }
    ConfusionMatrix m;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i];
        const int g = golds[i];
        if ((p != 0 && p != 1) || (g != 0 && g != 1)) {
            throw DataError("non-binary label at position " + std::to_string(i));
        }
        if (p == 1 && g == 1) ++m.tp;
        else if (p == 1) ++m.fp;
        else if (g == 1) ++m.fn;
        else ++m.tn;
    }
    return m;
}

double f1_binary(const ConfusionMatrix& m) {
    if (m.tp == 0) return (m.fp == 0 && m.fn == 0) ? 1.0 : 0.0;
    const double precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    const double recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    return 2.0 * precision * recall / (precision + recall);
}

double accuracy(const ConfusionMatrix& m) {
    if (m.total() == 0) throw DataError("accuracy of an empty evaluation set is undefined");
    return static_cast<double>(m.tp + m.tn) / static_cast<double>(m.total());
}

}  // namespace fedlora
