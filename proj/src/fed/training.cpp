#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "common/errors.hpp"
#include "fed/federation.hpp"
#include "num/rng.hpp"

namespace fedsilo::fed {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void validate_config(const FederationConfig& config) {
    if (config.rounds == 0) throw ConfigError("rounds must be at least 1");
    if (config.batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(config.lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (!(config.lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
    if (config.mode == AggregationMode::FedPerPartial && config.shared_segments.empty())
        throw ConfigError("partial aggregation needs a nonempty shared-segment list");
    if (config.mode == AggregationMode::FedAvgFull && !config.shared_segments.empty())
        throw ConfigError("full aggregation takes no shared-segment list");
}

std::string config_canonical_string(const FederationConfig& config) {
    std::string s;
    s += "rounds=" + std::to_string(config.rounds);
    s += ";epochs=" + std::to_string(config.local_epochs);
    s += ";batch=" + std::to_string(config.batch_size);
    s += ";lr0=" + fmt_double(config.lr0);
    s += ";decay=" + fmt_double(config.lr_decay);
    s += ";patience=" + std::to_string(config.early_stop_patience);
    s += ";mode=";
    s += config.mode == AggregationMode::FedAvgFull ? "fedavg_full" : "fedper_partial";
    s += ";shared=";
    for (std::size_t i = 0; i < config.shared_segments.size(); ++i) {
        if (i) s += ',';
        s += config.shared_segments[i];
    }
    s += ";seed=" + std::to_string(config.seed);
    return s;
}

std::uint64_t config_hash(const FederationConfig& config) {
    return num::CounterRng::fnv1a(config_canonical_string(config));
}

TrainOutcome local_train(const num::ParameterVector& w_in, ClientTask& task,
                         const FederationConfig& config, std::uint32_t round) {
    validate_config(config);
    std::size_t n = task.train_size();
    if (n == 0) throw TrainingError("client has no training samples");

    TrainOutcome out;
    out.params = w_in;
    out.metrics.initial_val_loss = task.validation_loss(w_in);
    out.metrics.best_val_loss = out.metrics.initial_val_loss;

    num::ParameterVector w = w_in;
    // Every client of a round shuffles by the same (seed, round, epoch)
    // stream; determinism then cannot depend on which client runs when.
    num::CounterRng shuffle_root =
        num::CounterRng::keyed(config.seed, "minibatch-shuffle").fork(round);

    std::size_t stall = 0;
    for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
        double lr = config.lr0 * std::pow(config.lr_decay, static_cast<double>(epoch));
        std::vector<std::size_t> order = shuffled_indices(shuffle_root.fork(epoch), n);

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            std::size_t len = std::min(config.batch_size, n - start);
            num::EvalResult step;
            try {
                step = task.train_batch(w, std::span<const std::size_t>(order).subspan(start, len));
            } catch (const NumericError& e) {
                throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(start / config.batch_size) + ": " +
                                    e.what());
            }
            if (!std::isfinite(step.loss))
                throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(start / config.batch_size));
            num::param_axpy_inplace(-lr, step.gradient, w);
        }
        ++out.metrics.epochs_run;

        double val = task.validation_loss(w);
        if (!std::isfinite(val))
            throw TrainingError("non-finite validation loss after epoch " + std::to_string(epoch));
        if (out.metrics.best_val_loss - val >= kValImprovementTol) {
            out.params = w;
            out.metrics.best_val_loss = val;
            stall = 0;
        } else if (config.early_stop_patience > 0 && ++stall >= config.early_stop_patience) {
            break;
        }
    }
    return out;
}

num::ParameterVector filter_segments(const num::ParameterVector& base,
                                     const std::vector<std::string>& names) {
    num::ParameterVector out;
    for (const auto& segment : base.segments) {
        if (std::find(names.begin(), names.end(), segment.name) != names.end())
            out.push(segment.name, segment.tensor);
    }
    if (out.segments.size() != names.size())
        throw StructuralError("segment filter names missing from the parameter vector");
    return out;
}

num::ParameterVector merge_segments(const num::ParameterVector& base,
                                    const num::ParameterVector& partial) {
    num::ParameterVector out = base;
    for (const auto& segment : partial.segments) {
        if (!out.has(segment.name))
            throw StructuralError("cannot merge unknown segment '" + segment.name + "'");
        num::Tensor& target = out.at(segment.name);
        if (!target.same_shape(segment.tensor))
            throw StructuralError("segment '" + segment.name + "' changed shape in merge");
        target = segment.tensor;
    }
    return out;
}

num::ParameterVector aggregate(std::vector<ClientUpdate> updates, AggregationMode mode,
                               const std::vector<std::string>& shared_segments) {
    if (updates.empty()) throw StructuralError("nothing to aggregate");

    std::stable_sort(updates.begin(), updates.end(),
                     [](const ClientUpdate& a, const ClientUpdate& b) {
                         return a.client_id < b.client_id;
                     });
    for (std::size_t i = 1; i < updates.size(); ++i)
        if (updates[i].client_id == updates[i - 1].client_id)
            throw StructuralError("duplicate update from client " +
                                  std::to_string(updates[i].client_id));

    for (const ClientUpdate& update : updates) {
        if (mode == AggregationMode::FedPerPartial) {
            // Uploads must carry the shared segments and nothing else; a
            // private segment leaking into an upload is a protocol bug.
            if (update.params.segments.size() != shared_segments.size())
                throw StructuralError("client " + std::to_string(update.client_id) +
                                      " uploaded the wrong segment set");
            for (const auto& segment : update.params.segments)
                if (std::find(shared_segments.begin(), shared_segments.end(), segment.name) ==
                    shared_segments.end())
                    throw StructuralError("client " + std::to_string(update.client_id) +
                                          " uploaded non-shared segment '" + segment.name + "'");
        }
        if (!update.params.compatible_with(updates.front().params))
            throw StructuralError("client " + std::to_string(update.client_id) +
                                  " uploaded incompatible parameters");
    }

    double total = 0.0;
    for (const ClientUpdate& update : updates) total += static_cast<double>(update.n_k);
    if (total <= 0.0) throw StructuralError("aggregation weights sum to zero");

    if (updates.size() == 1) return updates.front().params;

    num::ParameterVector result = updates.front().params.zeros_like();
    for (const ClientUpdate& update : updates)
        num::param_axpy_inplace(static_cast<double>(update.n_k) / total, update.params, result);
    return result;
}

SequentialResult train_rounds(const num::ParameterVector& w0, ClientTask& task,
                              const FederationConfig& config) {
    validate_config(config);
    SequentialResult out;
    out.params = w0;
    for (std::uint32_t round = 1; round <= config.rounds; ++round) {
        num::ParameterVector prev = out.params;
        out.params = local_train(prev, task, config, round).params;
        ++out.rounds_run;
        if (num::param_max_abs_diff(out.params, prev) < kConvergenceTol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

CentralizedResult run_centralized(const models::ModelSpec& spec, ClientTask& pooled,
                                  std::span<ClientTask* const> clients,
                                  const FederationConfig& config) {
    SequentialResult trained = train_rounds(models::init_model(spec), pooled, config);
    CentralizedResult out;
    out.params = std::move(trained.params);
    out.rounds_run = trained.rounds_run;
    out.converged = trained.converged;
    out.pooled_test_mse = pooled.test_mse(out.params);
    out.client_test_mse.reserve(clients.size());
    for (ClientTask* client : clients) out.client_test_mse.push_back(client->test_mse(out.params));
    return out;
}

} // namespace fedsilo::fed
