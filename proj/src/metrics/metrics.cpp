#include "metrics/metrics.hpp"

#include <cmath>
#include <limits>

#include "common/errors.hpp"
#include "models/models.hpp"

namespace fedsilo::metrics {

MetricReport regression_metrics(const std::vector<double>& predictions,
                                const std::vector<double>& labels) {
    if (predictions.empty()) throw StructuralError("metrics need at least one sample");
    if (predictions.size() != labels.size())
        throw StructuralError("prediction/label length mismatch");

    const std::size_t n = predictions.size();
    double label_mean = 0.0;
    for (double y : labels) label_mean += y;
    label_mean /= double(n);

    double ss_res = 0.0, abs_sum = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = predictions[i] - labels[i];
        ss_res += e * e;
        abs_sum += std::fabs(e);
        const double d = labels[i] - label_mean;
        ss_tot += d * d;
    }

    MetricReport r;
    r.n = n;
    r.mse = ss_res / double(n);
    r.mae = abs_sum / double(n);
    if (ss_tot > 0.0)
        r.r2 = 1.0 - ss_res / ss_tot;
    else // constant labels: perfect fit scores 1, anything else is flagged
        r.r2 = ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    return r;
}

double riptop(double metric_moi, double metric_baseline, double metric_perfect) {
    const double gap = metric_perfect - metric_baseline;
    if (gap == 0.0) throw StructuralError("riptop undefined: baseline equals perfect");
    return (metric_moi - metric_baseline) / gap;
}

double multistep_mse(const num::ParameterVector& params,
                     const std::vector<colsim::Trajectory>& trajectories) {
    if (trajectories.empty()) throw StructuralError("no trajectories to evaluate");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& t : trajectories) {
        num::Tensor x0 = num::Tensor::zeros({1, t.states.cols()});
        for (std::size_t j = 0; j < t.states.cols(); ++j) x0.at(0, j) = t.states.at(0, j);
        const num::Tensor rollout = models::koopman_rollout(params, x0, t.inputs);
        for (std::size_t i = 0; i < t.length(); ++i)
            for (std::size_t j = 0; j < t.states.cols(); ++j) {
                const double e = rollout.at(i, j) - t.states.at(i, j);
                sum += e * e;
                ++count;
            }
    }
    return sum / double(count);
}

SeedSummary summarize_seeds(const std::vector<double>& values) {
    if (values.empty()) throw StructuralError("no values to summarize");
    SeedSummary s;
    s.values = values;
    bool all_equal = true;
    for (double v : values) all_equal = all_equal && v == values[0];
    if (all_equal) { // keep identical inputs exact: mean is the value, se is 0
        s.mean = values[0];
        return s;
    }
    for (double v : values) s.mean += v;
    s.mean /= double(values.size());
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        const double sample_var = ss / double(values.size() - 1);
        s.standard_error = std::sqrt(sample_var / double(values.size()));
    }
    return s;
}

} // namespace fedsilo::metrics
