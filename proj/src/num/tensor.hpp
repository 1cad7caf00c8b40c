#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "common/errors.hpp"

namespace fedsilo::num {

// Dense row-major tensor of 64-bit floats. Rank 0 is a scalar (one element).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != data.size()) throw StructuralError("tensor data length does not match shape");
    }

    static std::size_t numel(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        std::size_t n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor row(std::initializer_list<double> vs) {
        return Tensor({1, vs.size()}, std::vector<double>(vs));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // Rank-2 accessors; rank-1 is treated as a single row, rank-0 as 1x1.
    std::size_t rows() const { return rank() >= 2 ? shape[0] : 1; }
    std::size_t cols() const {
        if (rank() >= 2) return shape[1];
        return rank() == 1 ? shape[0] : 1;
    }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

} // namespace fedsilo::num
