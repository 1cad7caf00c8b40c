#include <cstring>

#include "common/errors.hpp"
#include "data/data.hpp"

namespace fedsilo::data {

MinMaxScaler MinMaxScaler::fit(const num::Tensor& source) {
    if (source.rank() != 2 || source.rows() == 0)
        throw StructuralError("scaler needs a nonempty row matrix");
    MinMaxScaler s;
    const std::size_t d = source.cols();
    s.min_.assign(d, 0.0);
    s.max_.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double lo = source.at(0, j), hi = source.at(0, j);
        for (std::size_t i = 1; i < source.rows(); ++i) {
            lo = std::min(lo, source.at(i, j));
            hi = std::max(hi, source.at(i, j));
        }
        s.min_[j] = lo;
        s.max_[j] = hi;
        if (hi == lo) s.constant_dims_.push_back(j);
    }
    return s;
}

void MinMaxScaler::require_fitted(std::size_t dim) const {
    if (!fitted()) throw StructuralError("scaler used before fit");
    if (dim >= min_.size()) throw StructuralError("scaler dimension out of range");
}

double MinMaxScaler::transform_value(std::size_t dim, double v) const {
    require_fitted(dim);
    if (max_[dim] == min_[dim]) return 0.0; // constant column
    return (v - min_[dim]) / (max_[dim] - min_[dim]);
}

double MinMaxScaler::invert_value(std::size_t dim, double v) const {
    require_fitted(dim);
    if (max_[dim] == min_[dim]) return min_[dim];
    return min_[dim] + v * (max_[dim] - min_[dim]);
}

num::Tensor MinMaxScaler::transform(const num::Tensor& rows) const {
    require_fitted(0);
    if (rows.rank() != 2 || rows.cols() != dims())
        throw StructuralError("scaler input has wrong width");
    num::Tensor out = rows;
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t j = 0; j < dims(); ++j)
            out.at(i, j) = transform_value(j, rows.at(i, j));
    return out;
}

num::Tensor MinMaxScaler::inverse(const num::Tensor& rows) const {
    require_fitted(0);
    if (rows.rank() != 2 || rows.cols() != dims())
        throw StructuralError("scaler input has wrong width");
    num::Tensor out = rows;
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t j = 0; j < dims(); ++j)
            out.at(i, j) = invert_value(j, rows.at(i, j));
    return out;
}

num::Tensor stack_trajectory_rows(const std::vector<colsim::Trajectory>& trajectories) {
    if (trajectories.empty()) throw StructuralError("no trajectories to stack");
    const std::size_t sd = trajectories[0].states.cols();
    const std::size_t id = trajectories[0].inputs.cols();
    std::size_t total = 0;
    for (const auto& t : trajectories) {
        if (t.states.cols() != sd || t.inputs.cols() != id)
            throw StructuralError("trajectories have mismatched widths");
        total += t.length();
    }
    num::Tensor out = num::Tensor::zeros({total, sd + id});
    std::size_t row = 0;
    for (const auto& t : trajectories)
        for (std::size_t i = 0; i < t.length(); ++i, ++row) {
            for (std::size_t j = 0; j < sd; ++j) out.at(row, j) = t.states.at(i, j);
            for (std::size_t j = 0; j < id; ++j) out.at(row, sd + j) = t.inputs.at(i, j);
        }
    return out;
}

colsim::Trajectory scale_trajectory(const MinMaxScaler& scaler,
                                    const colsim::Trajectory& trajectory) {
    const std::size_t sd = trajectory.states.cols();
    const std::size_t id = trajectory.inputs.cols();
    if (scaler.dims() != sd + id)
        throw StructuralError("scaler width does not match state+input dimensions");
    colsim::Trajectory out = trajectory;
    for (std::size_t i = 0; i < trajectory.length(); ++i) {
        for (std::size_t j = 0; j < sd; ++j)
            out.states.at(i, j) = scaler.transform_value(j, trajectory.states.at(i, j));
        for (std::size_t j = 0; j < id; ++j)
            out.inputs.at(i, j) = scaler.transform_value(sd + j, trajectory.inputs.at(i, j));
    }
    return out;
}

} // namespace fedsilo::data
