#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "num/tensor.hpp"

namespace fedsilo::num {

// Flat model parameters as an ordered list of named tensors. Name, order and
// shape together define compatibility; values carry no identity.
struct ParameterVector {
    struct Segment {
        std::string name;
        Tensor tensor;
    };

    std::vector<Segment> segments;

    std::size_t total_len() const;
    bool compatible_with(const ParameterVector& o) const;

    const Tensor& at(std::string_view name) const;
    Tensor& at(std::string_view name);
    bool has(std::string_view name) const;

    // Throws StructuralError on duplicate names.
    void push(std::string name, Tensor t);

    ParameterVector zeros_like() const;

    // Flattened scalar access in segment order (used by finite differences).
    double get_flat(std::size_t i) const;
    void set_flat(std::size_t i, double v);
};

// Element-wise a*x + y over matching structures.
ParameterVector param_axpy(double a, const ParameterVector& x, const ParameterVector& y);

// In-place y += a*x, same structure rules.
void param_axpy_inplace(double a, const ParameterVector& x, ParameterVector& y);

// max_i |x_i - y_i| over all segments.
double param_max_abs_diff(const ParameterVector& x, const ParameterVector& y);

bool param_bitwise_equal(const ParameterVector& x, const ParameterVector& y);

} // namespace fedsilo::num
