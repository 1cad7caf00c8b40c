#pragma once

// Regression metrics, relative-improvement scoring, multistep rollout error,
// and multi-seed summaries.

#include <cstddef>
#include <vector>

#include "colsim/trajectory.hpp"
#include "num/params.hpp"

namespace fedsilo::metrics {

struct MetricReport {
    double mse = 0.0;
    double mae = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

MetricReport regression_metrics(const std::vector<double>& predictions,
                                const std::vector<double>& labels);

// Fraction of the gap between a baseline metric and its ideal value closed
// by the model of interest: (moi - baseline) / (perfect - baseline).
double riptop(double metric_moi, double metric_baseline, double metric_perfect);

// Ideal metric values used as the riptop reference point.
inline constexpr double kPerfectMse = 0.0;
inline constexpr double kPerfectMae = 0.0;
inline constexpr double kPerfectR2 = 1.0;

// Open-loop rollout error: predictions use only each trajectory's initial
// state and input signal; the MSE pools every timestep and state dimension
// across all trajectories. Trajectories must already be in model units.
double multistep_mse(const num::ParameterVector& params,
                     const std::vector<colsim::Trajectory>& trajectories);

struct SeedSummary {
    std::vector<double> values;
    double mean = 0.0;
    double standard_error = 0.0; // sample stddev / sqrt(n); 0 for n == 1
};

SeedSummary summarize_seeds(const std::vector<double>& values);

} // namespace fedsilo::metrics
