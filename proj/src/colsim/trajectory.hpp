#pragma once

#include <vector>

#include "num/tensor.hpp"

namespace fedsilo::colsim {

// Uniformly sampled response of the column: row t of states/inputs belongs to
// times[t]. Inputs are (feed composition x_F, liquid rate L).
struct Trajectory {
    std::vector<double> times; // seconds, uniform spacing
    num::Tensor states;        // p x 10
    num::Tensor inputs;        // p x 2

    std::size_t length() const { return times.size(); }
};

} // namespace fedsilo::colsim
