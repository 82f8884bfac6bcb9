// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedlora {

/// Dense row-major 2-D array of doubles with an optional gradient slot of the
/// same shape.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    std::string shape_str() const;

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool has_grad() const { return grad_.has_value(); }
    /// Throws StateError when the slot is absent.
    std::span<double> grad();
    std::span<const double> grad() const;
    /// Allocates the slot if needed and fills it with zeros.
    void zero_grad();
    void clear_grad() { grad_.reset(); }
    /// Adds `delta` elementwise into the slot, allocating it on first use.
    void accumulate_grad(std::span<const double> delta);

    /// Shape and values equal bit for bit; the gradient slot is ignored.
    bool same_values(const Tensor& other) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
    std::optional<std::vector<double>> grad_;
};

}  // namespace fedlora
