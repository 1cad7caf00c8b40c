// The run command: every seed through the private, centralized, and
// federated arms (plus the full-data reference for the column case), with
// per-round rows, per-arm tables, and a schema-validated summary.

#include "runner/runner.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"

#include "common/errors.hpp"
#include "metrics/metrics.hpp"

namespace fedsilo::runner {

namespace {

using njson = nlohmann::ordered_json;

double mean_of(const std::vector<double>& values) {
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Per-seed values condensed to mean, standard error, and median.
njson stats_block(const std::vector<double>& values) {
    const metrics::SeedSummary summary = metrics::summarize_seeds(values);
    njson block;
    block["values"] = summary.values;
    block["mean"] = summary.mean;
    block["standard_error"] = summary.standard_error;
    block["median"] = median_of(values);
    return block;
}

void append_csv_row(std::string& out, std::uint64_t seed, const std::string& arm,
                    std::size_t client_id, double value) {
    out += std::to_string(seed);
    out += ',';
    out += arm;
    out += ',';
    out += std::to_string(client_id);
    out += ',';
    out += format_g17(value);
    out += '\n';
}

// Everything one repetition contributes to the output tables.
struct SeedOutcome {
    std::uint64_t seed = 0;
    std::vector<fed::RoundRecord> records;
    std::vector<double> private_mse;     // per client, on its own test set
    std::vector<double> centralized_mse; // per client
    double centralized_pooled = 0.0;
    std::size_t target_index = 0;
    double fulldata_mse = 0.0; // column only
};

SeedOutcome run_one_seed(const ExperimentConfig& config,
                         const std::vector<data::ActivitySample>& samples,
                         const ColumnCorpus& corpus, std::uint64_t seed) {
    const bool column = config.scenario == Scenario::ColumnSysid;
    ScenarioBundle bundle = column ? build_column_bundle(config, corpus, seed)
                                   : build_activity_bundle(config, samples, seed);
    const fed::FederationConfig schedule = resolved_federation(config, bundle.spec, seed);
    const num::ParameterVector w0 = models::init_model(bundle.spec);
    const std::vector<fed::ClientTask*> clients = bundle.client_ptrs();

    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.target_index = bundle.target_index;

    for (fed::ClientTask* task : clients) {
        const fed::SequentialResult result = fed::train_rounds(w0, *task, schedule);
        outcome.private_mse.push_back(task->test_mse(result.params));
    }

    const fed::CentralizedResult central =
        fed::run_centralized(bundle.spec, *bundle.pooled, clients, schedule);
    outcome.centralized_mse = central.client_test_mse;
    outcome.centralized_pooled = central.pooled_test_mse;

    fed::FederationResult federated =
        fed::run_federation({bundle.spec, clients}, schedule);
    outcome.records = std::move(federated.records);

    if (column) {
        const fed::SequentialResult full = fed::train_rounds(w0, *bundle.fulldata, schedule);
        outcome.fulldata_mse = bundle.fulldata->test_mse(full.params);
    }
    return outcome;
}

} // namespace

void cmd_run(const ExperimentConfig& config) {
    const bool column = config.scenario == Scenario::ColumnSysid;

    std::vector<data::ActivitySample> samples;
    ColumnCorpus corpus;
    if (column)
        corpus = config.data.column_dir.empty() ? build_column_corpus(config.data)
                                                : load_column_corpus(config.data.column_dir);
    else
        samples = load_activity_samples(config.data);

    ensure_directory(config.output_dir);

    std::string rounds_csv = "seed,round,client_id,local_test_mse,global_test_mse\n";
    std::string timing_csv = "seed,round,wall_seconds\n";
    std::string arms_csv = "seed,arm,client_id,test_mse\n";

    // Per-seed series feeding the summary.
    std::vector<double> round1_avg, federated_avg, private_avg, central_pooled, central_avg;
    std::vector<double> riptop_global;
    std::vector<std::vector<double>> riptop_client(client_count(config));
    std::vector<double> target_private, target_federated, target_fulldata, target_ratio;
    std::vector<std::uint64_t> seeds;
    std::size_t column_target = 0; // scarce plant; the corpus fixes it across seeds

    for (std::size_t i = 0; i < config.num_seeds; ++i) {
        const std::uint64_t seed = config.base_seed + i;
        seeds.push_back(seed);
        const SeedOutcome outcome = run_one_seed(config, samples, corpus, seed);
        const std::size_t n_clients = outcome.private_mse.size();
        const fed::RoundRecord& first = outcome.records.front();
        const fed::RoundRecord& last = outcome.records.back();

        for (const fed::RoundRecord& record : outcome.records) {
            for (std::size_t k = 0; k < n_clients; ++k) {
                rounds_csv += std::to_string(seed) + ',' + std::to_string(record.round) + ',' +
                              std::to_string(k + 1) + ',' + format_g17(record.local_test_mse[k]) +
                              ',' + format_g17(record.global_test_mse[k]) + '\n';
            }
            timing_csv += std::to_string(seed) + ',' + std::to_string(record.round) + ',' +
                          format_g17(record.wall_seconds) + '\n';
        }

        for (std::size_t k = 0; k < n_clients; ++k)
            append_csv_row(arms_csv, seed, "round1_local", k + 1, first.local_test_mse[k]);
        for (std::size_t k = 0; k < n_clients; ++k)
            append_csv_row(arms_csv, seed, "private", k + 1, outcome.private_mse[k]);
        for (std::size_t k = 0; k < n_clients; ++k)
            append_csv_row(arms_csv, seed, "centralized", k + 1, outcome.centralized_mse[k]);
        append_csv_row(arms_csv, seed, "centralized_pooled", 0, outcome.centralized_pooled);
        for (std::size_t k = 0; k < n_clients; ++k)
            append_csv_row(arms_csv, seed, "federated", k + 1, last.global_test_mse[k]);
        if (column)
            append_csv_row(arms_csv, seed, "fulldata", outcome.target_index + 1,
                           outcome.fulldata_mse);

        const double baseline = mean_of(first.local_test_mse);
        const double global_now = mean_of(last.global_test_mse);
        round1_avg.push_back(baseline);
        federated_avg.push_back(global_now);
        private_avg.push_back(mean_of(outcome.private_mse));
        central_pooled.push_back(outcome.centralized_pooled);
        central_avg.push_back(mean_of(outcome.centralized_mse));
        riptop_global.push_back(metrics::riptop(global_now, baseline, metrics::kPerfectMse));
        for (std::size_t k = 0; k < n_clients; ++k)
            riptop_client[k].push_back(metrics::riptop(last.global_test_mse[k],
                                                       first.local_test_mse[k],
                                                       metrics::kPerfectMse));
        if (column) {
            column_target = outcome.target_index;
            target_private.push_back(outcome.private_mse[outcome.target_index]);
            target_federated.push_back(last.global_test_mse[outcome.target_index]);
            target_fulldata.push_back(outcome.fulldata_mse);
            target_ratio.push_back(outcome.private_mse[outcome.target_index] /
                                   last.global_test_mse[outcome.target_index]);
        }
    }

    njson summary;
    summary["scenario"] = scenario_name(config.scenario);
    summary["profile"] = profile_name(config.profile);
    summary["num_seeds"] = config.num_seeds;
    summary["seeds"] = seeds;
    summary["rounds"] = config.federation.rounds;
    summary["clients"] = client_count(config);
    njson arms;
    arms["round1_client_avg"] = stats_block(round1_avg);
    arms["private_client_avg"] = stats_block(private_avg);
    arms["centralized_pooled"] = stats_block(central_pooled);
    arms["centralized_client_avg"] = stats_block(central_avg);
    arms["federated_global_avg"] = stats_block(federated_avg);
    summary["arms"] = std::move(arms);
    summary["riptop_global"] = stats_block(riptop_global);
    njson per_client = njson::array();
    for (const std::vector<double>& series : riptop_client)
        per_client.push_back(stats_block(series));
    summary["riptop_per_client"] = std::move(per_client);
    if (column) {
        njson col;
        col["target_client"] = column_target + 1;
        col["private_target_mse"] = stats_block(target_private);
        col["federated_target_mse"] = stats_block(target_federated);
        col["fulldata_target_mse"] = stats_block(target_fulldata);
        col["private_over_federated_ratio"] = stats_block(target_ratio);
        summary["column"] = std::move(col);
    }

    const std::string summary_text = summary.dump(2) + "\n";
    validate_summary_text(summary_text);

    write_text_file(config.output_dir + "/rounds.csv", rounds_csv);
    write_text_file(config.output_dir + "/timing.csv", timing_csv);
    write_text_file(config.output_dir + "/arms.csv", arms_csv);
    write_text_file(config.output_dir + "/summary.json", summary_text);
    write_text_file(config.output_dir + "/summary.schema.json", summary_schema_text());
}

} // namespace fedsilo::runner
