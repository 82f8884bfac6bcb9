// SPDX-License-Identifier: Apache-2.0
#include "fedlora/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "fedlora/errors.hpp"

namespace fedlora {

Tensor::Tensor(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_str());
    }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged row list");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::string Tensor::shape_str() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

std::span<double> Tensor::grad() {
    if (!grad_) throw StateError("tensor " + shape_str() + " has no gradient");
    return *grad_;
}

std::span<const double> Tensor::grad() const {
    if (!grad_) throw StateError("tensor " + shape_str() + " has no gradient");
    return *grad_;
}

void Tensor::zero_grad() {
    if (grad_) {
        std::fill(grad_->begin(), grad_->end(), 0.0);
    } else {
        grad_.emplace(data_.size(), 0.0);
    }
}

void Tensor::accumulate_grad(std::span<const double> delta) {
    if (delta.size() != data_.size()) throw DimensionError("gradient length mismatch for " + shape_str());
    if (!grad_) grad_.emplace(data_.size(), 0.0);
    auto& g = *grad_;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

bool Tensor::same_values(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

}  // namespace fedlora
