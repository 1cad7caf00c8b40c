#include "colsim/column.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "common/errors.hpp"
#include "num/rng.hpp"

namespace fedsilo::colsim {

namespace {

double equilibrium_vapor(double alpha, double x) { return alpha * x / (1.0 + (alpha - 1.0) * x); }

void check_admissible(const ColumnParams& p, double liquid_rate) {
    const double distillate = p.vapor_rate - liquid_rate;
    const double bottoms = liquid_rate + p.feed_rate - p.vapor_rate;
    if (!(distillate > 0.0) || !(bottoms > 0.0))
        throw AdmissibilityError(
            "inadmissible operating point: L=" + std::to_string(liquid_rate) +
            " with V=" + std::to_string(p.vapor_rate) + " must keep D=V-L and B=L+F-V positive");
}

// dx/dt into out; x and out must not alias.
void derivatives_into(const ColumnParams& p, const double* x, double feed_composition,
                      double liquid_rate, double* out) {
    const std::size_t n = p.n_stages;
    const double V = p.vapor_rate, F = p.feed_rate, L = liquid_rate;
    const double B = L + F - V;

    double y[32] = {0};
    for (std::size_t i = 0; i < n; ++i) y[i] = equilibrium_vapor(p.alpha, x[i]);

    // Liquid leaving stage i (1-based): reflux above the feed, reflux plus
    // feed at the feed stage and below.
    auto liquid_from = [&](std::size_t stage) { return stage < p.feed_stage ? L : L + F; };

    out[0] = V * (y[1] - x[0]) / p.condenser_holdup;
    for (std::size_t i = 2; i <= n - 1; ++i) {
        double rate = liquid_from(i - 1) * x[i - 2] - liquid_from(i) * x[i - 1] +
                      V * (y[i] - y[i - 1]);
        if (i == p.feed_stage) rate += F * feed_composition;
        out[i - 1] = rate / p.holdup(i);
    }
    out[n - 1] =
        (liquid_from(n - 1) * x[n - 2] - V * y[n - 1] - B * x[n - 1]) / p.reboiler_holdup;
}

} // namespace

double ColumnParams::holdup(std::size_t stage_1based) const {
    if (stage_1based == 1) return condenser_holdup;
    if (stage_1based == n_stages) return reboiler_holdup;
    return tray_holdup;
}

double ColumnInputs::feed_composition_at(double t) const {
    const std::size_t s = std::min(std::size_t(std::max(0.0, t) / step_seconds),
                                   feed_composition.size() - 1);
    return feed_composition[s];
}

double ColumnInputs::liquid_rate_at(double t) const {
    const std::size_t s =
        std::min(std::size_t(std::max(0.0, t) / step_seconds), liquid_rate.size() - 1);
    return liquid_rate[s];
}

std::vector<double> column_derivatives(const ColumnParams& params, const std::vector<double>& x,
                                       double feed_composition, double liquid_rate) {
    if (x.size() != params.n_stages)
        throw StructuralError("column state must have one entry per stage");
    if (params.n_stages < 3 || params.n_stages > 32 || params.feed_stage <= 1 ||
        params.feed_stage >= params.n_stages)
        throw StructuralError("unsupported column geometry");
    check_admissible(params, liquid_rate);
    std::vector<double> out(params.n_stages);
    derivatives_into(params, x.data(), feed_composition, liquid_rate, out.data());
    return out;
}

Trajectory simulate_trajectory(const ColumnParams& params, const std::vector<double>& x0,
                               const ColumnInputs& inputs, double duration_seconds) {
    const std::size_t n = params.n_stages;
    if (x0.size() != n) throw StructuralError("initial state must have one entry per stage");
    if (inputs.feed_composition.empty() || inputs.liquid_rate.empty() ||
        inputs.feed_composition.size() != inputs.liquid_rate.size())
        throw StructuralError("input program must have matched, nonempty segments");
    for (double v : inputs.liquid_rate) check_admissible(params, v);

    const double dt_sample = params.sample_interval;
    const std::size_t substeps = std::size_t(std::llround(dt_sample / params.internal_step));
    if (substeps == 0) throw StructuralError("internal step exceeds the sampling interval");
    const double h = dt_sample / double(substeps);

    const std::size_t p = std::max<std::size_t>(1, std::size_t(std::llround(duration_seconds / dt_sample)));

    Trajectory out;
    out.times.reserve(p);
    out.states = num::Tensor::zeros({p, n});
    out.inputs = num::Tensor::zeros({p, 2});

    std::vector<double> x = x0;
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    std::size_t step_index = 0;

    for (std::size_t s = 0; s < p; ++s) {
        const double t_sample = double(s) * dt_sample;
        out.times.push_back(t_sample);
        for (std::size_t j = 0; j < n; ++j) out.states.at(s, j) = x[j];
        out.inputs.at(s, 0) = inputs.feed_composition_at(t_sample);
        out.inputs.at(s, 1) = inputs.liquid_rate_at(t_sample);
        if (s + 1 == p) break;

        for (std::size_t sub = 0; sub < substeps; ++sub) {
            const double t = t_sample + double(sub) * h;
            const double xf = inputs.feed_composition_at(t);
            const double lr = inputs.liquid_rate_at(t);

            derivatives_into(params, x.data(), xf, lr, k1.data());
            for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + 0.5 * h * k1[j];
            derivatives_into(params, tmp.data(), xf, lr, k2.data());
            for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + 0.5 * h * k2[j];
            derivatives_into(params, tmp.data(), xf, lr, k3.data());
            for (std::size_t j = 0; j < n; ++j) tmp[j] = x[j] + h * k3[j];
            derivatives_into(params, tmp.data(), xf, lr, k4.data());
            for (std::size_t j = 0; j < n; ++j)
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);

            ++step_index;
            for (std::size_t j = 0; j < n; ++j)
                if (!(x[j] >= -1e-9 && x[j] <= 1.0 + 1e-9))
                    throw NumericError("column state left the unit interval", step_index);
        }
    }
    return out;
}

ColumnInputs nominal_inputs(const ColumnParams& params) {
    ColumnInputs in;
    in.feed_composition = {0.5};
    in.liquid_rate = {params.vapor_rate - 0.5};
    return in;
}

std::vector<double> steady_state(const ColumnParams& params, double feed_composition,
                                 double liquid_rate, double settle_seconds) {
    ColumnInputs in;
    in.feed_composition = {feed_composition};
    in.liquid_rate = {liquid_rate};
    std::vector<double> x(params.n_stages, 0.5);
    Trajectory t = simulate_trajectory(params, x, in, settle_seconds);
    const std::size_t last = t.length() - 1;
    for (std::size_t j = 0; j < params.n_stages; ++j) x[j] = t.states.at(last, j);
    return x;
}

ColumnInputs generate_input_signal(std::uint64_t seed, double duration_seconds,
                                   double vapor_rate) {
    if (!(duration_seconds > 0.0)) throw StructuralError("signal duration must be positive");
    ColumnInputs in;
    const std::size_t segments =
        std::size_t(std::ceil(duration_seconds / in.step_seconds - 1e-12));
    num::CounterRng rng = num::CounterRng::keyed(seed, "column-input-signal");
    // Admissible L interval is (V-F, V) for F = 1; shrink 10% from each end.
    const double lo = vapor_rate - 0.9, hi = vapor_rate - 0.1;
    for (std::size_t s = 0; s < segments; ++s) {
        in.feed_composition.push_back(rng.uniform(2 * s, 0.3, 0.7));
        in.liquid_rate.push_back(rng.uniform(2 * s + 1, lo, hi));
    }
    return in;
}

std::vector<Trajectory> generate_client_dataset(const ColumnParams& params,
                                                std::size_t n_trajectories, std::uint64_t seed) {
    if (n_trajectories == 0) throw StructuralError("need at least one trajectory");
    ColumnInputs nominal = nominal_inputs(params);
    const std::vector<double> x0 =
        steady_state(params, nominal.feed_composition[0], nominal.liquid_rate[0]);

    num::CounterRng rng = num::CounterRng::keyed(seed, "column-dataset");
    std::vector<Trajectory> out;
    out.reserve(n_trajectories);
    for (std::size_t i = 0; i < n_trajectories; ++i) {
        ColumnInputs signal = generate_input_signal(rng.bits(i), 3600.0, params.vapor_rate);
        out.push_back(simulate_trajectory(params, x0, signal, 3600.0));
    }
    return out;
}

void write_trajectory_csv(const std::string& path, const Trajectory& trajectory) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "t";
    for (std::size_t j = 0; j < trajectory.states.cols(); ++j) f << ",x" << (j + 1);
    f << ",xF,L\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        f << buf;
    };
    for (std::size_t t = 0; t < trajectory.length(); ++t) {
        put(trajectory.times[t]);
        for (std::size_t j = 0; j < trajectory.states.cols(); ++j) {
            f << ',';
            put(trajectory.states.at(t, j));
        }
        f << ',';
        put(trajectory.inputs.at(t, 0));
        f << ',';
        put(trajectory.inputs.at(t, 1));
        f << '\n';
    }
    if (!f) throw IoError("failed while writing '" + path + "'");
}

Trajectory read_trajectory_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string header;
    if (!std::getline(f, header)) throw IoError("trajectory csv '" + path + "' is empty");

    std::size_t columns = 1;
    for (char c : header)
        if (c == ',') ++columns;
    if (columns < 4)
        throw IoError("trajectory csv '" + path + "' needs t, states, xF, L columns");
    const std::size_t n_states = columns - 3;

    std::vector<double> times;
    std::vector<double> states, inputs;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const char* p = line.c_str();
        std::vector<double> row;
        row.reserve(columns);
        while (true) {
            char* end = nullptr;
            row.push_back(std::strtod(p, &end));
            if (end == p) throw IoError("malformed number in '" + path + "'");
            if (*end == '\0') break;
            if (*end != ',') throw IoError("malformed row in '" + path + "'");
            p = end + 1;
        }
        if (row.size() != columns) throw IoError("ragged row in '" + path + "'");
        times.push_back(row[0]);
        states.insert(states.end(), row.begin() + 1, row.begin() + 1 + n_states);
        inputs.push_back(row[columns - 2]);
        inputs.push_back(row[columns - 1]);
    }
    if (times.empty()) throw IoError("trajectory csv '" + path + "' has no rows");

    Trajectory out;
    out.times = std::move(times);
    out.states = num::Tensor::zeros({out.times.size(), n_states});
    out.inputs = num::Tensor::zeros({out.times.size(), 2});
    std::memcpy(out.states.data.data(), states.data(), states.size() * sizeof(double));
    std::memcpy(out.inputs.data.data(), inputs.data(), inputs.size() * sizeof(double));
    return out;
}

} // namespace fedsilo::colsim
