#include "num/tape.hpp"

#include <cmath>
#include <cstring>

namespace fedsilo::num {

namespace {

// c[m x n] += a[m x k] @ b[k x n], fixed accumulation order.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void transpose_into(const double* a, double* at, std::size_t rows, std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) at[j * rows + i] = a[i * cols + j];
}

} // namespace

void Tape::shape_error(const char* op, const std::string& detail) const {
    throw StructuralError(std::string(op) + ": " + detail);
}

// push() may reallocate nodes_ and vals_, so callers must not hold references
// or value pointers across it.
Tape::Var Tape::push(Node n) {
    n.off = vals_.size();
    vals_.resize(vals_.size() + size_of(n), 0.0);
    nodes_.push_back(n);
    return static_cast<Var>(nodes_.size() - 1);
}

void Tape::check_finite(Var v) {
    const Node& n = nodes_[v];
    const double* p = vals_.data() + n.off;
    const std::size_t count = size_of(n);
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(p[i])) throw NumericError("non-finite value produced", v);
    }
}

Tape::Var Tape::input_rows(const double* p, std::size_t rows, std::size_t cols) {
    Node n{Op::Input, false};
    n.rows = static_cast<std::uint32_t>(rows);
    n.cols = static_cast<std::uint32_t>(cols);
    Var v = push(n);
    std::memcpy(val_ptr(v), p, rows * cols * sizeof(double));
    check_finite(v);
    return v;
}

Tape::Var Tape::input(const Tensor& t) { return input_rows(t.data.data(), t.rows(), t.cols()); }

Tape::Var Tape::scalar_input(double v) { return input_rows(&v, 1, 1); }

Tape::Var Tape::param(const Tensor& t) {
    Node n{Op::Param, true};
    n.rows = static_cast<std::uint32_t>(t.rows());
    n.cols = static_cast<std::uint32_t>(t.cols());
    Var v = push(n);
    std::memcpy(val_ptr(v), t.data.data(), t.size() * sizeof(double));
    check_finite(v);
    return v;
}

Tape::Var Tape::matmul(Var a, Var b) {
    const std::uint32_t m = nodes_[a].rows, k = nodes_[a].cols;
    const std::uint32_t kb = nodes_[b].rows, nn = nodes_[b].cols;
    if (k != kb)
        shape_error("matmul", "inner dimensions disagree (" + std::to_string(m) + "x" +
                                  std::to_string(k) + " @ " + std::to_string(kb) + "x" +
                                  std::to_string(nn) + ")");
    Node n{Op::Matmul, nodes_[a].needs_grad || nodes_[b].needs_grad, a, b, m, nn};
    Var v = push(n);
    gemm_acc(value(a), value(b), val_ptr(v), m, k, nn);
    check_finite(v);
    return v;
}

Tape::Var Tape::add(Var a, Var b) {
    const std::uint32_t r = nodes_[a].rows, c = nodes_[a].cols;
    if (r != nodes_[b].rows || c != nodes_[b].cols) shape_error("add", "operand shapes differ");
    Node n{Op::Add, nodes_[a].needs_grad || nodes_[b].needs_grad, a, b, r, c};
    Var v = push(n);
    const double* pa = value(a);
    const double* pb = value(b);
    double* out = val_ptr(v);
    for (std::size_t i = 0, count = std::size_t(r) * c; i < count; ++i) out[i] = pa[i] + pb[i];
    check_finite(v);
    return v;
}

Tape::Var Tape::add_rowvec(Var m, Var bias) {
    const std::uint32_t r = nodes_[m].rows, c = nodes_[m].cols;
    if (nodes_[bias].rows != 1 || nodes_[bias].cols != c)
        shape_error("add_rowvec", "bias is not a matching row vector");
    Node n{Op::AddRowvec, nodes_[m].needs_grad || nodes_[bias].needs_grad, m, bias, r, c};
    Var v = push(n);
    const double* pm = value(m);
    const double* pb = value(bias);
    double* out = val_ptr(v);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = pm[i * c + j] + pb[j];
    check_finite(v);
    return v;
}

Tape::Var Tape::add_scaled(Var a, Var b, double beta) {
    const std::uint32_t r = nodes_[a].rows, c = nodes_[a].cols;
    if (r != nodes_[b].rows || c != nodes_[b].cols) shape_error("add_scaled", "operand shapes differ");
    Node n{Op::AddScaled, nodes_[a].needs_grad || nodes_[b].needs_grad, a, b, r, c};
    n.coeff = beta;
    Var v = push(n);
    const double* pa = value(a);
    const double* pb = value(b);
    double* out = val_ptr(v);
    for (std::size_t i = 0, count = std::size_t(r) * c; i < count; ++i) out[i] = pa[i] + beta * pb[i];
    check_finite(v);
    return v;
}

Tape::Var Tape::tanh_op(Var a) {
    const std::uint32_t r = nodes_[a].rows, c = nodes_[a].cols;
    Node n{Op::Tanh, nodes_[a].needs_grad, a, 0, r, c};
    Var v = push(n);
    const double* pa = value(a);
    double* out = val_ptr(v);
    for (std::size_t i = 0, count = std::size_t(r) * c; i < count; ++i) out[i] = std::tanh(pa[i]);
    check_finite(v);
    return v;
}

Tape::Var Tape::relu_op(Var a) {
    const std::uint32_t r = nodes_[a].rows, c = nodes_[a].cols;
    Node n{Op::Relu, nodes_[a].needs_grad, a, 0, r, c};
    Var v = push(n);
    const double* pa = value(a);
    double* out = val_ptr(v);
    for (std::size_t i = 0, count = std::size_t(r) * c; i < count; ++i)
        out[i] = pa[i] > 0.0 ? pa[i] : 0.0;
    check_finite(v);
    return v;
}

Tape::Var Tape::sigmoid_op(Var a) {
    const std::uint32_t r = nodes_[a].rows, c = nodes_[a].cols;
    Node n{Op::Sigmoid, nodes_[a].needs_grad, a, 0, r, c};
    Var v = push(n);
    const double* pa = value(a);
    double* out = val_ptr(v);
    for (std::size_t i = 0, count = std::size_t(r) * c; i < count; ++i)
        out[i] = 1.0 / (1.0 + std::exp(-pa[i]));
    check_finite(v);
    return v;
}

Tape::Var Tape::identity_op(Var a) {
    const std::uint32_t r = nodes_[a].rows, c = nodes_[a].cols;
    Node n{Op::Identity, nodes_[a].needs_grad, a, 0, r, c};
    Var v = push(n);
    std::memcpy(val_ptr(v), value(a), std::size_t(r) * c * sizeof(double));
    return v;
}

Tape::Var Tape::concat_cols(std::span<const Var> vs) {
    if (vs.empty()) shape_error("concat_cols", "no operands");
    const std::uint32_t rows = nodes_[vs[0]].rows;
    std::uint32_t cols = 0;
    bool needs = false;
    for (Var v : vs) {
        if (nodes_[v].rows != rows) shape_error("concat_cols", "row counts differ");
        cols += nodes_[v].cols;
        needs = needs || nodes_[v].needs_grad;
    }
    Node n{Op::ConcatCols, needs, 0, 0, rows, cols};
    n.aux_begin = static_cast<std::uint32_t>(aux_.size());
    n.aux_count = static_cast<std::uint32_t>(vs.size());
    aux_.insert(aux_.end(), vs.begin(), vs.end());
    Var v = push(n);
    double* out = val_ptr(v);
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t col0 = 0;
        for (Var src : vs) {
            const std::size_t sc = nodes_[src].cols;
            std::memcpy(out + i * cols + col0, value(src) + i * sc, sc * sizeof(double));
            col0 += sc;
        }
    }
    return v;
}

Tape::Var Tape::concat_rows(std::span<const Var> vs) {
    if (vs.empty()) shape_error("concat_rows", "no operands");
    const std::uint32_t cols = nodes_[vs[0]].cols;
    std::uint32_t rows = 0;
    bool needs = false;
    for (Var v : vs) {
        if (nodes_[v].cols != cols) shape_error("concat_rows", "column counts differ");
        rows += nodes_[v].rows;
        needs = needs || nodes_[v].needs_grad;
    }
    Node n{Op::ConcatRows, needs, 0, 0, rows, cols};
    n.aux_begin = static_cast<std::uint32_t>(aux_.size());
    n.aux_count = static_cast<std::uint32_t>(vs.size());
    aux_.insert(aux_.end(), vs.begin(), vs.end());
    Var v = push(n);
    double* out = val_ptr(v);
    std::size_t row0 = 0;
    for (Var src : vs) {
        const std::size_t sr = nodes_[src].rows;
        std::memcpy(out + row0 * cols, value(src), sr * cols * sizeof(double));
        row0 += sr;
    }
    return v;
}

Tape::Var Tape::sum_rows(Var a) {
    const std::uint32_t r = nodes_[a].rows, c = nodes_[a].cols;
    Node n{Op::SumRows, nodes_[a].needs_grad, a, 0, 1, c};
    Var v = push(n);
    const double* pa = value(a);
    double* out = val_ptr(v);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += pa[i * c + j];
    check_finite(v);
    return v;
}

Tape::Var Tape::neighbor_sum(Var h, const Edge* edges, std::size_t n_edges) {
    const std::uint32_t r = nodes_[h].rows, c = nodes_[h].cols;
    for (std::size_t e = 0; e < n_edges; ++e) {
        if (edges[e].a >= r || edges[e].b >= r)
            shape_error("neighbor_sum", "edge endpoint out of range");
    }
    Node n{Op::NeighborSum, nodes_[h].needs_grad, h, 0, r, c};
    n.edges = edges;
    n.n_edges = n_edges;
    Var v = push(n);
    const double* ph = value(h);
    double* out = val_ptr(v);
    for (std::size_t e = 0; e < n_edges; ++e) {
        const std::size_t i = edges[e].a, j = edges[e].b;
        for (std::size_t d = 0; d < c; ++d) {
            out[i * c + d] += ph[j * c + d];
            out[j * c + d] += ph[i * c + d];
        }
    }
    check_finite(v);
    return v;
}

Tape::Var Tape::segment_sum(Var h, const std::uint32_t* offsets, std::size_t n_groups) {
    const std::uint32_t r = nodes_[h].rows, c = nodes_[h].cols;
    if (n_groups == 0 || offsets[0] != 0 || offsets[n_groups] != r)
        shape_error("segment_sum", "offsets must start at 0 and end at the row count");
    for (std::size_t g = 0; g < n_groups; ++g)
        if (offsets[g] > offsets[g + 1]) shape_error("segment_sum", "offsets must be nondecreasing");
    Node n{Op::SegmentSum, nodes_[h].needs_grad, h, 0, std::uint32_t(n_groups), c};
    n.idx = offsets;
    n.n_idx = n_groups;
    Var v = push(n);
    const double* ph = value(h);
    double* out = val_ptr(v);
    for (std::size_t g = 0; g < n_groups; ++g)
        for (std::uint32_t i = offsets[g]; i < offsets[g + 1]; ++i)
            for (std::size_t d = 0; d < c; ++d) out[g * c + d] += ph[i * c + d];
    check_finite(v);
    return v;
}

Tape::Var Tape::gather_rows(Var m, const std::uint32_t* idx, std::size_t n_out) {
    const std::uint32_t r = nodes_[m].rows, c = nodes_[m].cols;
    for (std::size_t i = 0; i < n_out; ++i)
        if (idx[i] >= r) shape_error("gather_rows", "index out of range");
    Node n{Op::GatherRows, nodes_[m].needs_grad, m, 0, std::uint32_t(n_out), c};
    n.idx = idx;
    n.n_idx = n_out;
    Var v = push(n);
    const double* pm = value(m);
    double* out = val_ptr(v);
    for (std::size_t i = 0; i < n_out; ++i)
        std::memcpy(out + i * c, pm + idx[i] * c, c * sizeof(double));
    return v;
}

Tape::Var Tape::mse(Var pred, Var target) {
    const std::uint32_t r = nodes_[pred].rows, c = nodes_[pred].cols;
    if (r != nodes_[target].rows || c != nodes_[target].cols)
        shape_error("mse", "operand shapes differ");
    Node n{Op::Mse, nodes_[pred].needs_grad || nodes_[target].needs_grad, pred, target, 1, 1};
    Var v = push(n);
    const double* pp = value(pred);
    const double* pt = value(target);
    const std::size_t count = std::size_t(r) * c;
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = pp[i] - pt[i];
        acc += d * d;
    }
    *val_ptr(v) = acc / static_cast<double>(count);
    check_finite(v);
    return v;
}

double Tape::scalar_value(Var v) const {
    if (size_of(nodes_[v]) != 1) throw StructuralError("scalar_value: node is not a scalar");
    return vals_[nodes_[v].off];
}

void Tape::backward(Var loss) {
    if (size_of(nodes_[loss]) != 1) throw StructuralError("backward: loss is not a scalar");
    grads_.assign(vals_.size(), 0.0);
    grads_[nodes_[loss].off] = 1.0;

    for (std::size_t idx = loss + 1; idx-- > 0;) {
        const Node& n = nodes_[idx];
        if (!n.needs_grad) continue;
        const double* g = grads_.data() + n.off;
        switch (n.op) {
        case Op::Input:
        case Op::Param:
            break;
        case Op::Matmul: {
            const std::size_t m = nodes_[n.a].rows, k = nodes_[n.a].cols, nn = nodes_[n.b].cols;
            if (nodes_[n.a].needs_grad) {
                // dA += dC @ B^T
                scratch_.resize(k * nn);
                transpose_into(value(n.b), scratch_.data(), k, nn);
                gemm_acc(g, scratch_.data(), grad_ptr(n.a), m, nn, k);
            }
            if (nodes_[n.b].needs_grad) {
                // dB += A^T @ dC
                scratch_.resize(m * k);
                transpose_into(value(n.a), scratch_.data(), m, k);
                gemm_acc(scratch_.data(), g, grad_ptr(n.b), k, m, nn);
            }
            break;
        }
        case Op::Add: {
            const std::size_t c = size_of(n);
            if (nodes_[n.a].needs_grad) {
                double* ga = grad_ptr(n.a);
                for (std::size_t i = 0; i < c; ++i) ga[i] += g[i];
            }
            if (nodes_[n.b].needs_grad) {
                double* gb = grad_ptr(n.b);
                for (std::size_t i = 0; i < c; ++i) gb[i] += g[i];
            }
            break;
        }
        case Op::AddRowvec: {
            if (nodes_[n.a].needs_grad) {
                double* ga = grad_ptr(n.a);
                for (std::size_t i = 0, c = size_of(n); i < c; ++i) ga[i] += g[i];
            }
            if (nodes_[n.b].needs_grad) {
                double* gb = grad_ptr(n.b);
                for (std::size_t i = 0; i < n.rows; ++i)
                    for (std::size_t j = 0; j < n.cols; ++j) gb[j] += g[i * n.cols + j];
            }
            break;
        }
        case Op::AddScaled: {
            const std::size_t c = size_of(n);
            if (nodes_[n.a].needs_grad) {
                double* ga = grad_ptr(n.a);
                for (std::size_t i = 0; i < c; ++i) ga[i] += g[i];
            }
            if (nodes_[n.b].needs_grad) {
                double* gb = grad_ptr(n.b);
                for (std::size_t i = 0; i < c; ++i) gb[i] += n.coeff * g[i];
            }
            break;
        }
        case Op::Tanh: {
            double* ga = grad_ptr(n.a);
            const double* y = vals_.data() + n.off;
            for (std::size_t i = 0, c = size_of(n); i < c; ++i) ga[i] += (1.0 - y[i] * y[i]) * g[i];
            break;
        }
        case Op::Relu: {
            double* ga = grad_ptr(n.a);
            const double* x = value(n.a);
            for (std::size_t i = 0, c = size_of(n); i < c; ++i)
                if (x[i] > 0.0) ga[i] += g[i];
            break;
        }
        case Op::Sigmoid: {
            double* ga = grad_ptr(n.a);
            const double* y = vals_.data() + n.off;
            for (std::size_t i = 0, c = size_of(n); i < c; ++i) ga[i] += y[i] * (1.0 - y[i]) * g[i];
            break;
        }
        case Op::Identity: {
            double* ga = grad_ptr(n.a);
            for (std::size_t i = 0, c = size_of(n); i < c; ++i) ga[i] += g[i];
            break;
        }
        case Op::ConcatCols: {
            std::size_t col0 = 0;
            for (std::uint32_t s = 0; s < n.aux_count; ++s) {
                Var src = aux_[n.aux_begin + s];
                const std::size_t sc = nodes_[src].cols;
                if (nodes_[src].needs_grad) {
                    double* gs = grad_ptr(src);
                    for (std::size_t i = 0; i < n.rows; ++i)
                        for (std::size_t j = 0; j < sc; ++j) gs[i * sc + j] += g[i * n.cols + col0 + j];
                }
                col0 += sc;
            }
            break;
        }
        case Op::ConcatRows: {
            std::size_t row0 = 0;
            for (std::uint32_t s = 0; s < n.aux_count; ++s) {
                Var src = aux_[n.aux_begin + s];
                const std::size_t sr = nodes_[src].rows;
                if (nodes_[src].needs_grad) {
                    double* gs = grad_ptr(src);
                    const double* gsrc = g + row0 * n.cols;
                    for (std::size_t i = 0, c = sr * n.cols; i < c; ++i) gs[i] += gsrc[i];
                }
                row0 += sr;
            }
            break;
        }
        case Op::SumRows: {
            const std::size_t r = nodes_[n.a].rows, c = nodes_[n.a].cols;
            double* ga = grad_ptr(n.a);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
            break;
        }
        case Op::NeighborSum: {
            double* gh = grad_ptr(n.a);
            const std::size_t c = n.cols;
            for (std::size_t e = 0; e < n.n_edges; ++e) {
                const std::size_t i = n.edges[e].a, j = n.edges[e].b;
                for (std::size_t d = 0; d < c; ++d) {
                    gh[j * c + d] += g[i * c + d];
                    gh[i * c + d] += g[j * c + d];
                }
            }
            break;
        }
        case Op::SegmentSum: {
            double* gh = grad_ptr(n.a);
            const std::size_t c = n.cols;
            for (std::size_t grp = 0; grp < n.n_idx; ++grp)
                for (std::uint32_t i = n.idx[grp]; i < n.idx[grp + 1]; ++i)
                    for (std::size_t d = 0; d < c; ++d) gh[i * c + d] += g[grp * c + d];
            break;
        }
        case Op::GatherRows: {
            double* gm = grad_ptr(n.a);
            const std::size_t c = n.cols;
            for (std::size_t i = 0; i < n.n_idx; ++i)
                for (std::size_t d = 0; d < c; ++d) gm[n.idx[i] * c + d] += g[i * c + d];
            break;
        }
        case Op::Mse: {
            const std::size_t count = std::size_t(nodes_[n.a].rows) * nodes_[n.a].cols;
            const double scale = 2.0 * g[0] / static_cast<double>(count);
            const double* pp = value(n.a);
            const double* pt = value(n.b);
            if (nodes_[n.a].needs_grad) {
                double* gp = grad_ptr(n.a);
                for (std::size_t i = 0; i < count; ++i) gp[i] += scale * (pp[i] - pt[i]);
            }
            if (nodes_[n.b].needs_grad) {
                double* gt = grad_ptr(n.b);
                for (std::size_t i = 0; i < count; ++i) gt[i] -= scale * (pp[i] - pt[i]);
            }
            break;
        }
        }
    }
}

void Tape::reset() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    aux_.clear();
}

std::vector<Tape::Var> bind_params(Tape& tape, const ParameterVector& params) {
    std::vector<Tape::Var> vars;
    vars.reserve(params.segments.size());
    for (const auto& s : params.segments) vars.push_back(tape.param(s.tensor));
    return vars;
}

ParameterVector collect_gradient(const Tape& tape, const ParameterVector& params,
                                 const std::vector<Tape::Var>& vars) {
    ParameterVector grad = params.zeros_like();
    for (std::size_t s = 0; s < vars.size(); ++s) {
        const double* g = tape.grad(vars[s]);
        auto& dst = grad.segments[s].tensor.data;
        std::memcpy(dst.data(), g, dst.size() * sizeof(double));
    }
    return grad;
}

EvalResult forward_backward(Tape& tape, const ParameterVector& params, const LossBuilder& build) {
    tape.reset();
    auto vars = bind_params(tape, params);
    Tape::Var loss = build(tape, vars);
    tape.backward(loss);
    return {tape.scalar_value(loss), collect_gradient(tape, params, vars)};
}

double forward_loss(Tape& tape, const ParameterVector& params, const LossBuilder& build) {
    tape.reset();
    auto vars = bind_params(tape, params);
    return tape.scalar_value(build(tape, vars));
}

EvalResult forward_backward(const ParameterVector& params, const LossBuilder& build) {
    Tape tape;
    return forward_backward(tape, params, build);
}

double forward_loss(const ParameterVector& params, const LossBuilder& build) {
    Tape tape;
    return forward_loss(tape, params, build);
}

ParameterVector finite_difference_gradient(const ParameterVector& params, const LossBuilder& build,
                                           double step) {
    if (!(step > 0.0)) throw StructuralError("finite_difference_gradient: step must be positive");
    ParameterVector grad = params.zeros_like();
    ParameterVector probe = params;
    Tape tape;
    const std::size_t total = params.total_len();
    for (std::size_t i = 0; i < total; ++i) {
        const double w0 = probe.get_flat(i);
        probe.set_flat(i, w0 + step);
        const double fp = forward_loss(tape, probe, build);
        probe.set_flat(i, w0 - step);
        const double fm = forward_loss(tape, probe, build);
        probe.set_flat(i, w0);
        grad.set_flat(i, (fp - fm) / (2.0 * step));
    }
    return grad;
}

} // namespace fedsilo::num
