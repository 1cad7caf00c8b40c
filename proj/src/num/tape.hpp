#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "num/params.hpp"
#include "num/tensor.hpp"

namespace fedsilo::num {

// Reverse-mode gradient tape over dense rank<=2 values. Nodes are appended in
// evaluation order, so the reverse of the append order is a valid reverse
// topological order and the backward pass visits each node exactly once.
// Value and adjoint storage live in arenas that keep their capacity across
// reset(), so steady-state training does not allocate.
//
// Every produced value is scanned for non-finite entries; the first offender
// raises NumericError with its node index.
class Tape {
public:
    using Var = std::uint32_t;

    struct Edge {
        std::uint32_t a, b;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. input() is constant data, param() participates in gradients.
    Var input(const Tensor& t);
    Var input_rows(const double* p, std::size_t rows, std::size_t cols);
    Var scalar_input(double v);
    Var param(const Tensor& t);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var add_rowvec(Var m, Var bias);
    Var add_scaled(Var a, Var b, double beta); // a + beta*b
    Var tanh_op(Var a);
    Var relu_op(Var a);
    Var sigmoid_op(Var a);
    Var identity_op(Var a);
    Var concat_cols(std::span<const Var> vs);
    Var concat_rows(std::span<const Var> vs);
    Var sum_rows(Var a);
    // Undirected neighbor aggregation: out[i] = sum_{(i,j) in edges} h[j].
    // The edge array must stay alive until reset().
    Var neighbor_sum(Var h, const Edge* edges, std::size_t n_edges);
    // out[g] = sum of rows [offsets[g], offsets[g+1]); offsets has n_groups+1
    // entries starting at 0 and ending at rows(h); must outlive reset().
    Var segment_sum(Var h, const std::uint32_t* offsets, std::size_t n_groups);
    // out[i] = m[idx[i]]; idx may repeat rows; must outlive reset().
    Var gather_rows(Var m, const std::uint32_t* idx, std::size_t n_out);
    Var mse(Var pred, Var target);

    std::size_t rows(Var v) const { return nodes_[v].rows; }
    std::size_t cols(Var v) const { return nodes_[v].cols; }
    const double* value(Var v) const { return vals_.data() + nodes_[v].off; }
    double scalar_value(Var v) const;

    void backward(Var loss);
    const double* grad(Var v) const { return grads_.data() + nodes_[v].off; }

    void reset();
    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Input,
        Param,
        Matmul,
        Add,
        AddRowvec,
        AddScaled,
        Tanh,
        Relu,
        Sigmoid,
        Identity,
        ConcatCols,
        ConcatRows,
        SumRows,
        NeighborSum,
        SegmentSum,
        GatherRows,
        Mse,
    };

    struct Node {
        Op op;
        bool needs_grad;
        Var a = 0, b = 0;
        std::uint32_t rows = 0, cols = 0;
        std::size_t off = 0;
        std::uint32_t aux_begin = 0, aux_count = 0; // concat inputs
        const Edge* edges = nullptr;
        std::size_t n_edges = 0;
        const std::uint32_t* idx = nullptr; // segment offsets / gather indices
        std::size_t n_idx = 0;
        double coeff = 0.0; // add_scaled beta
    };

    std::size_t size_of(const Node& n) const { return std::size_t(n.rows) * n.cols; }
    Var push(Node n);
    double* val_ptr(Var v) { return vals_.data() + nodes_[v].off; }
    double* grad_ptr(Var v) { return grads_.data() + nodes_[v].off; }
    void check_finite(Var v);
    [[noreturn]] void shape_error(const char* op, const std::string& detail) const;

    std::vector<Node> nodes_;
    std::vector<double> vals_;
    std::vector<double> grads_;
    std::vector<Var> aux_;
    std::vector<double> scratch_; // transposes in backward matmul
};

// Binds every segment of a ParameterVector as param leaves, in order.
std::vector<Tape::Var> bind_params(Tape& tape, const ParameterVector& params);

// Reads back d(loss)/d(segment) after backward(); mirrors the bound structure.
ParameterVector collect_gradient(const Tape& tape, const ParameterVector& params,
                                 const std::vector<Tape::Var>& vars);

// A model is anything that can lay its loss onto a tape given bound params.
using LossBuilder = std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

struct EvalResult {
    double loss;
    ParameterVector gradient;
};

// One forward+backward sweep; gradient mirrors the parameter structure.
// The Tape& overloads reset and reuse the given tape so hot loops keep its
// arena capacity instead of reallocating per step.
EvalResult forward_backward(Tape& tape, const ParameterVector& params, const LossBuilder& build);
EvalResult forward_backward(const ParameterVector& params, const LossBuilder& build);

// Forward only.
double forward_loss(Tape& tape, const ParameterVector& params, const LossBuilder& build);
double forward_loss(const ParameterVector& params, const LossBuilder& build);

// Central-difference gradient oracle, (f(w+h e_i) - f(w-h e_i)) / (2h).
ParameterVector finite_difference_gradient(const ParameterVector& params, const LossBuilder& build,
                                           double step);

} // namespace fedsilo::num
