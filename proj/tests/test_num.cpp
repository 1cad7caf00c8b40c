#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

#include "common/errors.hpp"
#include "num/params.hpp"
#include "num/rng.hpp"
#include "num/tape.hpp"
#include "num/tensor.hpp"

using namespace fedsilo;
using num::CounterRng;
using num::ParameterVector;
using num::Tape;
using num::Tensor;

namespace {

Tensor random_tensor(CounterRng& rng, std::size_t rows, std::size_t cols, std::uint64_t& ctr,
                     double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros({rows, cols});
    for (auto& v : t.data) v = rng.uniform(ctr++, lo, hi);
    return t;
}

double max_rel_err(const ParameterVector& a, const ParameterVector& b) {
    double worst = 0.0;
    const std::size_t n = a.total_len();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.get_flat(i), y = b.get_flat(i);
        worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
    }
    return worst;
}

bool bitwise_equal_params(const ParameterVector& a, const ParameterVector& b) {
    return num::param_bitwise_equal(a, b);
}

} // namespace

TEST_CASE("tensor shape invariant") {
    CHECK_NOTHROW(Tensor({2, 3}, std::vector<double>(6, 0.0)));
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), StructuralError);
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    t.at(1, 2) = 7.0;
    CHECK(t.data[5] == 7.0);
}

TEST_CASE("parameter vector structure") {
    ParameterVector pv;
    pv.push("a", Tensor::zeros({2, 2}));
    pv.push("b", Tensor::zeros({1, 3}));
    CHECK(pv.total_len() == 7);
    CHECK_THROWS_AS(pv.push("a", Tensor::zeros({1, 1})), StructuralError);

    ParameterVector same;
    same.push("a", Tensor::zeros({2, 2}));
    same.push("b", Tensor::zeros({1, 3}));
    CHECK(pv.compatible_with(same));

    ParameterVector reordered;
    reordered.push("b", Tensor::zeros({1, 3}));
    reordered.push("a", Tensor::zeros({2, 2}));
    CHECK_FALSE(pv.compatible_with(reordered));

    ParameterVector reshaped;
    reshaped.push("a", Tensor::zeros({4, 1}));
    reshaped.push("b", Tensor::zeros({1, 3}));
    CHECK_FALSE(pv.compatible_with(reshaped));
}

TEST_CASE("param_axpy examples") {
    ParameterVector x, y, zeros;
    x.push("w", Tensor::row({1.0, 2.0}));
    y.push("w", Tensor::row({0.0, 0.0}));
    ParameterVector r = num::param_axpy(1.0, x, y);
    CHECK(r.segments[0].tensor.data == std::vector<double>{1.0, 2.0});

    ParameterVector x2, y2;
    x2.push("w", Tensor::row({2.0, 4.0}));
    y2.push("w", Tensor::row({1.0, 1.0}));
    ParameterVector r2 = num::param_axpy(0.5, x2, y2);
    CHECK(r2.segments[0].tensor.data == std::vector<double>{2.0, 3.0});

    ParameterVector r3 = num::param_axpy(-1.0, x2, x2);
    CHECK(r3.segments[0].tensor.data == std::vector<double>{0.0, 0.0});

    ParameterVector mismatched;
    mismatched.push("v", Tensor::row({1.0}));
    CHECK_THROWS_AS(num::param_axpy(1.0, x, mismatched), StructuralError);
}

TEST_CASE("param_axpy identity is bitwise") {
    CounterRng rng = CounterRng::keyed(11, "axpy");
    std::uint64_t ctr = 0;
    ParameterVector x;
    x.push("w", random_tensor(rng, 7, 5, ctr, -3.0, 3.0));
    x.push("b", random_tensor(rng, 1, 5, ctr, -3.0, 3.0));
    ParameterVector r = num::param_axpy(1.0, x, x.zeros_like());
    CHECK(bitwise_equal_params(r, x));
}

TEST_CASE("square loss: value and gradient at w=3") {
    ParameterVector pv;
    pv.push("w", Tensor::scalar(3.0));
    auto [loss, grad] = num::forward_backward(pv, [](Tape& t, const std::vector<Tape::Var>& w) {
        return t.mse(w[0], t.scalar_input(0.0));
    });
    CHECK(loss == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(grad.segments[0].tensor.data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("constant loss gives zero gradient") {
    ParameterVector pv;
    pv.push("w", Tensor::row({0.4, -1.2, 3.0}));
    auto [loss, grad] = num::forward_backward(pv, [](Tape& t, const std::vector<Tape::Var>& w) {
        return t.mse(w[0], w[0]); // identically zero for any w
    });
    CHECK(loss == 0.0);
    for (double g : grad.segments[0].tensor.data) CHECK(g == 0.0);
}

TEST_CASE("finite differences on the square loss") {
    ParameterVector pv;
    pv.push("w", Tensor::scalar(3.0));
    auto build = [](Tape& t, const std::vector<Tape::Var>& w) {
        return t.mse(w[0], t.scalar_input(0.0));
    };
    ParameterVector fd = num::finite_difference_gradient(pv, build, 1e-6);
    CHECK(fd.segments[0].tensor.data[0] == doctest::Approx(6.0).epsilon(1e-6));
    CHECK_THROWS_AS(num::finite_difference_gradient(pv, build, 0.0), StructuralError);
}

TEST_CASE("finite differences of |w| at 0 cancel") {
    ParameterVector pv;
    pv.push("w", Tensor::scalar(0.0));
    // |w| = relu(w) + relu(-w)
    auto build = [](Tape& t, const std::vector<Tape::Var>& w) {
        Tape::Var neg = t.add_scaled(t.scalar_input(0.0), w[0], -1.0);
        Tape::Var absw = t.add(t.relu_op(w[0]), t.relu_op(neg));
        return t.mse(absw, t.scalar_input(-1.0)); // (|w|+1)^2, slope 2 at 0+ and -2 at 0-
    };
    ParameterVector fd = num::finite_difference_gradient(pv, build, 1e-4);
    CHECK(fd.segments[0].tensor.data[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("three-parameter linear model matches analytic gradient") {
    // pred = x @ w + b with x=[1,2], w=[0.5,-0.3]^T, b=0.2, target 1.0
    // pred = 0.1, loss = 0.81, dL/dpred = -1.8 -> dw = [-1.8, -3.6], db = -1.8
    ParameterVector pv;
    pv.push("w", Tensor({2, 1}, {0.5, -0.3}));
    pv.push("b", Tensor::scalar(0.2));
    auto build = [](Tape& t, const std::vector<Tape::Var>& w) {
        Tape::Var x = t.input(Tensor::row({1.0, 2.0}));
        Tape::Var pred = t.add(t.matmul(x, w[0]), w[1]);
        return t.mse(pred, t.scalar_input(1.0));
    };
    auto [loss, grad] = num::forward_backward(pv, build);
    CHECK(loss == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(grad.at("w").data[0] == doctest::Approx(-1.8).epsilon(1e-12));
    CHECK(grad.at("w").data[1] == doctest::Approx(-3.6).epsilon(1e-12));
    CHECK(grad.at("b").data[0] == doctest::Approx(-1.8).epsilon(1e-12));

    ParameterVector fd = num::finite_difference_gradient(pv, build, 1e-6);
    CHECK(max_rel_err(grad, fd) < 1e-8);
}

TEST_CASE("two-layer perceptron gradient matches finite differences") {
    CounterRng rng = CounterRng::keyed(42, "mlp");
    std::uint64_t ctr = 0;
    ParameterVector pv;
    pv.push("w1", random_tensor(rng, 5, 8, ctr));
    pv.push("b1", random_tensor(rng, 1, 8, ctr));
    pv.push("w2", random_tensor(rng, 8, 1, ctr));
    pv.push("b2", random_tensor(rng, 1, 1, ctr));
    Tensor x = random_tensor(rng, 5, 5, ctr);
    Tensor y = random_tensor(rng, 5, 1, ctr);

    auto build = [&](Tape& t, const std::vector<Tape::Var>& w) {
        Tape::Var h = t.tanh_op(t.add_rowvec(t.matmul(t.input(x), w[0]), w[1]));
        Tape::Var pred = t.add_rowvec(t.matmul(h, w[2]), w[3]);
        return t.mse(pred, t.input(y));
    };
    auto [loss, grad] = num::forward_backward(pv, build);
    CHECK(std::isfinite(loss));
    ParameterVector fd = num::finite_difference_gradient(pv, build, 1e-6);
    CHECK(max_rel_err(grad, fd) < 1e-4);
}

TEST_CASE("forward_backward is bitwise deterministic and tapes are reusable") {
    CounterRng rng = CounterRng::keyed(7, "det");
    std::uint64_t ctr = 0;
    ParameterVector pv;
    pv.push("w1", random_tensor(rng, 6, 4, ctr));
    pv.push("w2", random_tensor(rng, 4, 2, ctr));
    Tensor x = random_tensor(rng, 3, 6, ctr);
    Tensor y = random_tensor(rng, 3, 2, ctr);
    auto build = [&](Tape& t, const std::vector<Tape::Var>& w) {
        return t.mse(t.matmul(t.sigmoid_op(t.matmul(t.input(x), w[0])), w[1]), t.input(y));
    };

    auto r1 = num::forward_backward(pv, build);
    auto r2 = num::forward_backward(pv, build);
    CHECK(std::memcmp(&r1.loss, &r2.loss, sizeof(double)) == 0);
    CHECK(bitwise_equal_params(r1.gradient, r2.gradient));

    Tape reused;
    auto r3 = num::forward_backward(reused, pv, build);
    auto r4 = num::forward_backward(reused, pv, build);
    CHECK(std::memcmp(&r1.loss, &r3.loss, sizeof(double)) == 0);
    CHECK(bitwise_equal_params(r1.gradient, r3.gradient));
    CHECK(bitwise_equal_params(r3.gradient, r4.gradient));
}

TEST_CASE("neighbor aggregation sums adjacent rows both ways") {
    // Path graph 0-1-2; h rows are distinct singletons.
    ParameterVector pv;
    pv.push("h", Tensor({3, 1}, {1.0, 10.0, 100.0}));
    static const Tape::Edge edges[] = {{0, 1}, {1, 2}};
    Tape t;
    auto vars = num::bind_params(t, pv);
    Tape::Var agg = t.neighbor_sum(vars[0], edges, 2);
    CHECK(t.value(agg)[0] == 10.0);   // node 0 sees node 1
    CHECK(t.value(agg)[1] == 101.0);  // node 1 sees nodes 0 and 2
    CHECK(t.value(agg)[2] == 10.0);   // node 2 sees node 1

    Tape::Var loss = t.mse(agg, t.input(Tensor::zeros({3, 1})));
    t.backward(loss);
    // d loss/d h_j = (2/3) * sum_{i adj j} agg_i
    CHECK(t.grad(vars[0])[0] == doctest::Approx(2.0 / 3.0 * 101.0));
    CHECK(t.grad(vars[0])[1] == doctest::Approx(2.0 / 3.0 * (10.0 + 10.0)));
    CHECK(t.grad(vars[0])[2] == doctest::Approx(2.0 / 3.0 * 101.0));
}

TEST_CASE("every primitive matches finite differences on randomized cases") {
    CounterRng rng = CounterRng::keyed(1234, "prims");
    std::uint64_t ctr = 0;
    int cases = 0;

    auto check_case = [&](const ParameterVector& pv, const num::LossBuilder& build) {
        auto [loss, grad] = num::forward_backward(pv, build);
        REQUIRE(std::isfinite(loss));
        ParameterVector fd = num::finite_difference_gradient(pv, build, 1e-6);
        CHECK(max_rel_err(grad, fd) < 1e-4);
        ++cases;
    };

    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t m = 1 + rng.below(ctr++, 4);
        const std::size_t k = 1 + rng.below(ctr++, 4);
        const std::size_t n = 1 + rng.below(ctr++, 4);

        // matmul (both sides trainable)
        {
            ParameterVector pv;
            pv.push("a", random_tensor(rng, m, k, ctr));
            pv.push("b", random_tensor(rng, k, n, ctr));
            Tensor tgt = random_tensor(rng, m, n, ctr);
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.matmul(w[0], w[1]), t.input(tgt));
            });
        }
        // add, add_scaled
        {
            ParameterVector pv;
            pv.push("a", random_tensor(rng, m, n, ctr));
            pv.push("b", random_tensor(rng, m, n, ctr));
            Tensor tgt = random_tensor(rng, m, n, ctr);
            const double beta = rng.uniform(ctr++, -2.0, 2.0);
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.add(w[0], w[1]), t.input(tgt));
            });
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.add_scaled(w[0], w[1], beta), t.input(tgt));
            });
        }
        // add_rowvec
        {
            ParameterVector pv;
            pv.push("m", random_tensor(rng, m, n, ctr));
            pv.push("bias", random_tensor(rng, 1, n, ctr));
            Tensor tgt = random_tensor(rng, m, n, ctr);
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.add_rowvec(w[0], w[1]), t.input(tgt));
            });
        }
        // elementwise activations; keep relu inputs away from the kink
        {
            ParameterVector pv;
            Tensor a = random_tensor(rng, m, n, ctr);
            for (auto& v : a.data)
                if (std::abs(v) < 0.05) v = v < 0 ? v - 0.05 : v + 0.05;
            pv.push("a", a);
            Tensor tgt = random_tensor(rng, m, n, ctr);
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.tanh_op(w[0]), t.input(tgt));
            });
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.relu_op(w[0]), t.input(tgt));
            });
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.sigmoid_op(w[0]), t.input(tgt));
            });
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.identity_op(w[0]), t.input(tgt));
            });
        }
        // concat_cols / concat_rows
        {
            ParameterVector pv;
            pv.push("a", random_tensor(rng, m, n, ctr));
            pv.push("b", random_tensor(rng, m, k, ctr));
            Tensor tgt = random_tensor(rng, m, n + k, ctr);
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                std::vector<Tape::Var> parts{w[0], w[1]};
                return t.mse(t.concat_cols(parts), t.input(tgt));
            });
        }
        {
            ParameterVector pv;
            pv.push("a", random_tensor(rng, m, n, ctr));
            pv.push("b", random_tensor(rng, k, n, ctr));
            Tensor tgt = random_tensor(rng, m + k, n, ctr);
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                std::vector<Tape::Var> parts{w[0], w[1]};
                return t.mse(t.concat_rows(parts), t.input(tgt));
            });
        }
        // sum_rows
        {
            ParameterVector pv;
            pv.push("a", random_tensor(rng, m, n, ctr));
            Tensor tgt = random_tensor(rng, 1, n, ctr);
            check_case(pv, [&](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.sum_rows(w[0]), t.input(tgt));
            });
        }
        // segment_sum with random group boundaries
        {
            const std::size_t rows = 2 + rng.below(ctr++, 6);
            auto offsets = std::make_shared<std::vector<std::uint32_t>>();
            offsets->push_back(0);
            for (std::uint32_t r = 1; r < rows; ++r)
                if (rng.below(ctr++, 2) == 0) offsets->push_back(r);
            offsets->push_back(std::uint32_t(rows));
            const std::size_t groups = offsets->size() - 1;
            ParameterVector pv;
            pv.push("h", random_tensor(rng, rows, n, ctr));
            Tensor tgt = random_tensor(rng, groups, n, ctr);
            check_case(pv, [&, offsets](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.segment_sum(w[0], offsets->data(), offsets->size() - 1),
                             t.input(tgt));
            });
        }
        // gather_rows with repeated indices
        {
            const std::size_t rows = 2 + rng.below(ctr++, 4);
            const std::size_t picks = 1 + rng.below(ctr++, 6);
            auto idx = std::make_shared<std::vector<std::uint32_t>>();
            for (std::size_t i = 0; i < picks; ++i)
                idx->push_back(std::uint32_t(rng.below(ctr++, rows)));
            ParameterVector pv;
            pv.push("m", random_tensor(rng, rows, n, ctr));
            Tensor tgt = random_tensor(rng, picks, n, ctr);
            check_case(pv, [&, idx](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.gather_rows(w[0], idx->data(), idx->size()), t.input(tgt));
            });
        }
        // neighbor_sum on a small random graph
        {
            const std::size_t nodes = 2 + rng.below(ctr++, 4);
            auto edges = std::make_shared<std::vector<Tape::Edge>>();
            for (std::size_t i = 0; i + 1 < nodes; ++i)
                edges->push_back({std::uint32_t(i), std::uint32_t(i + 1)});
            if (nodes > 2 && rng.below(ctr++, 2) == 0)
                edges->push_back({0, std::uint32_t(nodes - 1)});
            ParameterVector pv;
            pv.push("h", random_tensor(rng, nodes, n, ctr));
            Tensor tgt = random_tensor(rng, nodes, n, ctr);
            check_case(pv, [&, edges](Tape& t, const std::vector<Tape::Var>& w) {
                return t.mse(t.neighbor_sum(w[0], edges->data(), edges->size()), t.input(tgt));
            });
        }
    }
    CHECK(cases >= 100);
}

TEST_CASE("shape mismatches name the offending operation") {
    ParameterVector pv;
    pv.push("a", Tensor::zeros({2, 3}));
    pv.push("b", Tensor::zeros({2, 3}));
    Tape t;
    auto vars = num::bind_params(t, pv);
    CHECK_THROWS_WITH_AS(t.matmul(vars[0], vars[1]),
                         doctest::Contains("matmul"), StructuralError);
    CHECK_THROWS_WITH_AS(t.add_rowvec(vars[0], vars[1]),
                         doctest::Contains("add_rowvec"), StructuralError);
    CHECK_THROWS_WITH_AS(t.mse(vars[0], t.input(Tensor::zeros({3, 2}))),
                         doctest::Contains("mse"), StructuralError);
}

TEST_CASE("non-finite intermediates raise a numeric error with the node index") {
    ParameterVector pv;
    pv.push("w", Tensor::scalar(1e308));
    Tape t;
    auto vars = num::bind_params(t, pv);
    try {
        Tape::Var sq = t.matmul(vars[0], vars[0]); // overflows to inf
        (void)sq;
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.node_index >= 0);
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }

    Tensor bad = Tensor::scalar(0.0);
    bad.data[0] = std::numeric_limits<double>::quiet_NaN();
    Tape t2;
    CHECK_THROWS_AS(t2.input(bad), NumericError);
}

TEST_CASE("counter rng is a pure function of key and counter") {
    CounterRng a = CounterRng::keyed(99, "stream");
    CounterRng b = CounterRng::keyed(99, "stream");
    for (std::uint64_t c = 0; c < 32; ++c) CHECK(a.bits(c) == b.bits(c));
    CHECK(a.bits(5) == a.bits(5)); // stateless: re-reading a counter is stable

    CounterRng other = CounterRng::keyed(99, "other-stream");
    bool any_diff = false;
    for (std::uint64_t c = 0; c < 8; ++c) any_diff = any_diff || (a.bits(c) != other.bits(c));
    CHECK(any_diff);

    for (std::uint64_t c = 0; c < 1000; ++c) {
        const double u = a.uniform01(c);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (std::uint64_t c = 0; c < 1000; ++c) {
        CHECK(a.below(c, 7) < 7);
        CHECK(std::isfinite(a.gaussian(c)));
    }

    auto perm = num::shuffled_indices(a, 10);
    std::vector<std::size_t> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
    CHECK(perm == num::shuffled_indices(b, 10));
}
