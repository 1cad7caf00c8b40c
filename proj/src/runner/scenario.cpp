// Scenario assembly: turns a config, a corpus, and a repetition seed into the
// seeded model spec plus the client / pooled / full-data tasks the arms train.

#include "runner/runner.hpp"

#include <algorithm>

#include "common/errors.hpp"

namespace fedsilo::runner {

namespace {

// Smallest training set, ties to the lowest client id; this is the client
// whose relative improvement the uneven-scaffold runs track.
std::size_t smallest_client(const std::vector<std::size_t>& train_sizes) {
    return static_cast<std::size_t>(
        std::min_element(train_sizes.begin(), train_sizes.end()) - train_sizes.begin());
}

} // namespace

std::vector<fed::ClientTask*> ScenarioBundle::client_ptrs() const {
    std::vector<fed::ClientTask*> ptrs;
    ptrs.reserve(clients.size());
    for (const auto& task : clients) ptrs.push_back(task.get());
    return ptrs;
}

models::ModelSpec make_model_spec(const ExperimentConfig& config, std::uint64_t run_seed) {
    models::ModelSpec spec;
    spec.kind = config.scenario == Scenario::ColumnSysid ? models::ModelKind::KoopmanWiener
                                                         : models::ModelKind::GnnMixture;
    spec.seed = run_seed;
    spec.message_width = config.model.message_width;
    spec.head_width = config.model.head_width;
    spec.autoencoder_width = config.model.autoencoder_width;
    spec.latent_dim = config.model.latent_dim;
    return spec;
}

fed::FederationConfig resolved_federation(const ExperimentConfig& config,
                                          const models::ModelSpec& spec,
                                          std::uint64_t run_seed) {
    fed::FederationConfig out = config.federation;
    out.seed = run_seed;
    out.shared_segments = out.mode == fed::AggregationMode::FedPerPartial
                              ? models::shared_segment_names(spec)
                              : std::vector<std::string>{};
    fed::validate_config(out);
    return out;
}

ScenarioBundle build_activity_bundle(const ExperimentConfig& config,
                                     const std::vector<data::ActivitySample>& samples,
                                     std::uint64_t run_seed) {
    ScenarioBundle bundle;
    bundle.spec = make_model_spec(config, run_seed);
    bundle.cache = std::make_unique<fed::MoleculeCache>();

    const std::vector<data::ActivityClient> clients =
        config.scenario == Scenario::ActivityEvenRandom
            ? data::partition_even_random(samples, config.clients, run_seed)
            : data::partition_uneven_scaffold(samples, run_seed);

    std::vector<data::ActivitySample> pooled_train, pooled_val, pooled_test;
    for (const data::ActivityClient& client : clients) {
        bundle.clients.push_back(std::make_unique<fed::ActivityTask>(client, *bundle.cache));
        bundle.train_sizes.push_back(client.train_count());
        for (const data::ActivitySample& s : fed::select_samples(client.samples,
                                                                  client.splits.train))
            pooled_train.push_back(s);
        for (const data::ActivitySample& s : fed::select_samples(client.samples,
                                                                  client.splits.val))
            pooled_val.push_back(s);
        for (const data::ActivitySample& s : fed::select_samples(client.samples,
                                                                  client.splits.test))
            pooled_test.push_back(s);
    }
    bundle.pooled = std::make_unique<fed::ActivityTask>(
        std::move(pooled_train), std::move(pooled_val), std::move(pooled_test), *bundle.cache);
    bundle.target_index = smallest_client(bundle.train_sizes);
    return bundle;
}

ScenarioBundle build_column_bundle(const ExperimentConfig& config, const ColumnCorpus& corpus,
                                   std::uint64_t run_seed) {
    if (corpus.conditions.empty()) throw ConfigError("column corpus holds no conditions");
    ScenarioBundle bundle;
    bundle.spec = make_model_spec(config, run_seed);

    // All plants agree on one scaling envelope, fitted over every training
    // pool (the long test runs stay out of it). Fitting on the pools keeps
    // the envelope constant across repetition seeds, so test MSEs share one
    // scale; only min/max summaries cross company lines, never trajectories.
    std::vector<colsim::Trajectory> all_pool;
    for (const ColumnCondition& condition : corpus.conditions)
        for (const colsim::Trajectory& t : condition.train_pool) all_pool.push_back(t);
    const data::MinMaxScaler scaler = data::MinMaxScaler::fit(data::stack_trajectory_rows(all_pool));

    std::vector<std::pair<double, std::vector<colsim::Trajectory>>> sets;
    double target_rate = 0.0;
    for (const ColumnCondition& condition : corpus.conditions) {
        sets.emplace_back(condition.vapor_rate, condition.train_pool);
        if (condition.is_target) target_rate = condition.vapor_rate;
    }
    const std::vector<data::TrajectoryClient> clients =
        data::partition_by_condition(std::move(sets), target_rate, run_seed);
    if (clients.size() != corpus.conditions.size())
        throw ConfigError("column corpus conditions are not unique");

    std::vector<colsim::Trajectory> pooled_train, pooled_val, pooled_test;
    const colsim::Trajectory* target_test = nullptr;
    for (std::size_t k = 0; k < clients.size(); ++k) {
        const data::TrajectoryClient& client = clients[k];
        // partition_by_condition orders clients by ascending vapor rate; find
        // the matching condition so each task scores on its own plant's run.
        const ColumnCondition* condition = nullptr;
        for (const ColumnCondition& c : corpus.conditions)
            if (c.vapor_rate == client.vapor_rate) condition = &c;
        if (condition == nullptr)
            throw ConfigError("column corpus lost the condition a client refers to");

        std::vector<colsim::Trajectory> train =
            fed::select_trajectories(client.trajectories, client.splits.train);
        std::vector<colsim::Trajectory> val =
            fed::select_trajectories(client.trajectories, client.splits.val);
        for (const colsim::Trajectory& t : train) pooled_train.push_back(t);
        for (const colsim::Trajectory& t : val) pooled_val.push_back(t);
        pooled_test.push_back(condition->test_run);
        if (client.is_target) {
            bundle.target_index = k;
            target_test = &condition->test_run;
        }

        bundle.train_sizes.push_back(client.train_count());
        bundle.clients.push_back(std::make_unique<fed::ColumnTask>(
            std::move(train), std::move(val),
            std::vector<colsim::Trajectory>{condition->test_run}, scaler));
    }
    if (target_test == nullptr) throw ConfigError("column corpus has no target condition");

    bundle.pooled = std::make_unique<fed::ColumnTask>(
        std::move(pooled_train), std::move(pooled_val), std::move(pooled_test), scaler);

    // Full-data reference: a rich pool at the target rate, scored on the same
    // held-out run as the scarce plant.
    const data::Splits full_splits = data::split_indices(corpus.fulldata_pool.size(), run_seed);
    bundle.fulldata = std::make_unique<fed::ColumnTask>(
        fed::select_trajectories(corpus.fulldata_pool, full_splits.train),
        fed::select_trajectories(corpus.fulldata_pool, full_splits.val),
        std::vector<colsim::Trajectory>{*target_test}, scaler);
    return bundle;
}

} // namespace fedsilo::runner
