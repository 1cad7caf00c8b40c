#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colsim/trajectory.hpp"
#include "num/tensor.hpp"

namespace fedsilo::colsim {

// Constant-molar-overflow binary column: stage 1 condenser, stages 2-9 trays,
// stage 10 reboiler, feed onto stage 5. States are light-component liquid
// mole fractions per stage. The vapor rate V is an operating constant that
// differs between plant owners.
struct ColumnParams {
    std::size_t n_stages = 10;
    std::size_t feed_stage = 5; // 1-based
    double alpha = 3.55;        // relative volatility
    double feed_rate = 1.0;     // kmol/s
    double condenser_holdup = 5.0;
    double tray_holdup = 0.5;
    double reboiler_holdup = 5.0;
    double vapor_rate = 1.8; // kmol/s

    // Integration grid. Tray time constants sit near M_tray / (V dy/dx),
    // a fraction of a second at these holdups, so the explicit integrator
    // needs a substantially smaller step than the 60 s sampling interval.
    double internal_step = 0.05;   // seconds
    double sample_interval = 60.0; // seconds

    double holdup(std::size_t stage_1based) const;
};

// Piecewise-constant input program; segment s covers
// [s*step_seconds, (s+1)*step_seconds). Times past the last segment hold its
// value.
struct ColumnInputs {
    double step_seconds = 1800.0;
    std::vector<double> feed_composition; // x_F per segment, in [0.3, 0.7]
    std::vector<double> liquid_rate;      // L per segment, kmol/s

    double feed_composition_at(double t) const;
    double liquid_rate_at(double t) const;
};

// dx/dt of all stages. Throws AdmissibilityError when the operating point
// does not keep both product flows positive (needs V - F < L < V).
std::vector<double> column_derivatives(const ColumnParams& params, const std::vector<double>& x,
                                       double feed_composition, double liquid_rate);

// Classical fixed-step RK4, sampled every sample_interval. duration == 0
// yields the single sample x0. States must remain inside [-1e-9, 1+1e-9];
// an excursion raises NumericError naming the failing internal step.
Trajectory simulate_trajectory(const ColumnParams& params, const std::vector<double>& x0,
                               const ColumnInputs& inputs, double duration_seconds);

// Operating point used to start every client trajectory: x_F = 0.5 and
// L = V - 0.5 (centred in the admissible band for F = 1).
ColumnInputs nominal_inputs(const ColumnParams& params);

// Long-horizon integration to the fixed point at constant inputs.
std::vector<double> steady_state(const ColumnParams& params, double feed_composition,
                                 double liquid_rate, double settle_seconds = 72000.0);

// Random step program: new segment every 30 minutes, x_F uniform in
// [0.3, 0.7], L uniform in the admissible interval shrunk 10% per side.
ColumnInputs generate_input_signal(std::uint64_t seed, double duration_seconds, double vapor_rate);

// Training trajectories for one plant: each 1 hour long, starting from the
// plant's nominal steady state under an independent random step program.
std::vector<Trajectory> generate_client_dataset(const ColumnParams& params,
                                                std::size_t n_trajectories, std::uint64_t seed);

// CSV export, header: t,x1..x10,xF,L (17 significant digits).
void write_trajectory_csv(const std::string& path, const Trajectory& trajectory);

// Inverse of write_trajectory_csv; %.17g output makes the round trip exact.
Trajectory read_trajectory_csv(const std::string& path);

} // namespace fedsilo::colsim
