#include "num/params.hpp"

#include <cmath>
#include <cstring>

namespace fedsilo::num {

std::size_t ParameterVector::total_len() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.tensor.size();
    return n;
}

bool ParameterVector::compatible_with(const ParameterVector& o) const {
    if (segments.size() != o.segments.size()) return false;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (segments[i].name != o.segments[i].name) return false;
        if (segments[i].tensor.shape != o.segments[i].tensor.shape) return false;
    }
    return true;
}

const Tensor& ParameterVector::at(std::string_view name) const {
    for (const auto& s : segments)
        if (s.name == name) return s.tensor;
    throw StructuralError("no parameter segment named '" + std::string(name) + "'");
}

Tensor& ParameterVector::at(std::string_view name) {
    for (auto& s : segments)
        if (s.name == name) return s.tensor;
    throw StructuralError("no parameter segment named '" + std::string(name) + "'");
}

bool ParameterVector::has(std::string_view name) const {
    for (const auto& s : segments)
        if (s.name == name) return true;
    return false;
}

void ParameterVector::push(std::string name, Tensor t) {
    if (has(name)) throw StructuralError("duplicate parameter segment name '" + name + "'");
    segments.push_back({std::move(name), std::move(t)});
}

ParameterVector ParameterVector::zeros_like() const {
    ParameterVector out;
    out.segments.reserve(segments.size());
    for (const auto& s : segments) out.segments.push_back({s.name, Tensor::zeros(s.tensor.shape)});
    return out;
}

double ParameterVector::get_flat(std::size_t i) const {
    for (const auto& s : segments) {
        if (i < s.tensor.size()) return s.tensor.data[i];
        i -= s.tensor.size();
    }
    throw StructuralError("flat index out of range");
}

void ParameterVector::set_flat(std::size_t i, double v) {
    for (auto& s : segments) {
        if (i < s.tensor.size()) {
            s.tensor.data[i] = v;
            return;
        }
        i -= s.tensor.size();
    }
    throw StructuralError("flat index out of range");
}

static void require_compatible(const ParameterVector& x, const ParameterVector& y, const char* op) {
    if (!x.compatible_with(y))
        throw StructuralError(std::string(op) + ": incompatible parameter structures");
}

ParameterVector param_axpy(double a, const ParameterVector& x, const ParameterVector& y) {
    require_compatible(x, y, "param_axpy");
    ParameterVector out = y;
    for (std::size_t s = 0; s < x.segments.size(); ++s) {
        const auto& xs = x.segments[s].tensor.data;
        auto& os = out.segments[s].tensor.data;
        for (std::size_t i = 0; i < xs.size(); ++i) os[i] += a * xs[i];
    }
    return out;
}

void param_axpy_inplace(double a, const ParameterVector& x, ParameterVector& y) {
    require_compatible(x, y, "param_axpy");
    for (std::size_t s = 0; s < x.segments.size(); ++s) {
        const auto& xs = x.segments[s].tensor.data;
        auto& ys = y.segments[s].tensor.data;
        for (std::size_t i = 0; i < xs.size(); ++i) ys[i] += a * xs[i];
    }
}

double param_max_abs_diff(const ParameterVector& x, const ParameterVector& y) {
    require_compatible(x, y, "param_max_abs_diff");
    double m = 0.0;
    for (std::size_t s = 0; s < x.segments.size(); ++s) {
        const auto& xs = x.segments[s].tensor.data;
        const auto& ys = y.segments[s].tensor.data;
        for (std::size_t i = 0; i < xs.size(); ++i) m = std::max(m, std::fabs(xs[i] - ys[i]));
    }
    return m;
}

bool param_bitwise_equal(const ParameterVector& x, const ParameterVector& y) {
    if (!x.compatible_with(y)) return false;
    for (std::size_t s = 0; s < x.segments.size(); ++s) {
        const auto& xs = x.segments[s].tensor.data;
        const auto& ys = y.segments[s].tensor.data;
        if (std::memcmp(xs.data(), ys.data(), xs.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

} // namespace fedsilo::num
