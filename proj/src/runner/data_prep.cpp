// Dataset materialization: simulate or load the experiment corpora, and the
// gen-data command that freezes them to disk behind a checksummed manifest.

#include "runner/runner.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"

#include "common/errors.hpp"
#include "num/rng.hpp"

namespace fedsilo::runner {

namespace {

using njson = nlohmann::ordered_json;

std::string indexed_name(const std::string& stem, std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "_%03zu.csv", index);
    return stem + buf;
}

colsim::ColumnParams params_for(double vapor_rate) {
    colsim::ColumnParams params;
    params.vapor_rate = vapor_rate;
    return params;
}

// One long held-out run for a plant: from its nominal steady state under an
// independent random step program.
colsim::Trajectory simulate_test_run(double vapor_rate, double hours, std::uint64_t seed) {
    const colsim::ColumnParams params = params_for(vapor_rate);
    const colsim::ColumnInputs nominal = colsim::nominal_inputs(params);
    const std::vector<double> x0 = colsim::steady_state(params, nominal.feed_composition_at(0.0),
                                                        nominal.liquid_rate_at(0.0));
    const double duration = hours * 3600.0;
    const colsim::ColumnInputs program = colsim::generate_input_signal(seed, duration, vapor_rate);
    return colsim::simulate_trajectory(params, x0, program, duration);
}

njson manifest_skeleton(const char* kind, const DataConfig& data) {
    njson manifest;
    manifest["kind"] = kind;
    manifest["data_seed"] = data.seed;
    return manifest;
}

njson parse_manifest(const std::string& dir) {
    const std::string text = read_text_file(dir + "/manifest.json");
    try {
        return njson::parse(text);
    } catch (const std::exception& e) {
        throw IoError(dir + "/manifest.json is not valid JSON: " + e.what());
    }
}

// Every file listed in the manifest must still hash to what gen-data wrote.
void verify_checksums(const std::string& dir, const njson& manifest) {
    if (!manifest.contains("checksums") || !manifest.at("checksums").is_object())
        throw IoError(dir + "/manifest.json has no checksum table");
    for (const auto& item : manifest.at("checksums").items()) {
        const std::string recorded = item.value().get<std::string>();
        const std::string actual = file_checksum_hex(dir + "/" + item.key());
        if (actual != recorded)
            throw IoError("checksum mismatch for " + dir + "/" + item.key() +
                          ": data directory differs from its manifest");
    }
}

} // namespace

std::vector<data::ActivitySample> load_activity_samples(const DataConfig& config) {
    if (config.activity_csv.empty())
        return data::generate_synthetic_activity(config.seed, config.n_samples);
    data::IngestResult loaded = data::ingest_activity_csv(config.activity_csv);
    if (loaded.samples.empty())
        throw IoError("no usable rows in " + config.activity_csv + " (" +
                      std::to_string(loaded.rejected.size()) + " rejected)");
    return std::move(loaded.samples);
}

ColumnCorpus build_column_corpus(const DataConfig& config) {
    ColumnCorpus corpus;
    const num::CounterRng train_seeds = num::CounterRng::keyed(config.seed, "column-train");
    const num::CounterRng test_seeds = num::CounterRng::keyed(config.seed, "column-test");
    for (std::size_t i = 0; i < config.vapor_rates.size(); ++i) {
        ColumnCondition condition;
        condition.vapor_rate = config.vapor_rates[i];
        condition.is_target = config.vapor_rates[i] == config.target_vapor_rate;
        const std::size_t runs =
            condition.is_target ? config.target_trajectories : config.rich_trajectories;
        condition.train_pool = colsim::generate_client_dataset(params_for(condition.vapor_rate),
                                                               runs, train_seeds.bits(i));
        condition.test_run =
            simulate_test_run(condition.vapor_rate, config.test_hours, test_seeds.bits(i));
        corpus.conditions.push_back(std::move(condition));
    }
    // Rich-sized pool at the target rate, backing the full-data baseline arm.
    corpus.fulldata_pool = colsim::generate_client_dataset(
        params_for(config.target_vapor_rate), config.rich_trajectories,
        num::CounterRng::keyed(config.seed, "column-fulldata").bits(0));
    return corpus;
}

ColumnCorpus load_column_corpus(const std::string& dir) {
    const njson manifest = parse_manifest(dir);
    if (manifest.value("kind", "") != std::string("column_sysid"))
        throw ConfigError(dir + " does not hold column trajectories (manifest kind '" +
                          manifest.value("kind", "") + "')");
    verify_checksums(dir, manifest);

    ColumnCorpus corpus;
    for (const auto& entry : manifest.at("conditions")) {
        ColumnCondition condition;
        condition.vapor_rate = entry.at("vapor_rate").get<double>();
        condition.is_target = entry.at("is_target").get<bool>();
        for (const auto& name : entry.at("train_files"))
            condition.train_pool.push_back(
                colsim::read_trajectory_csv(dir + "/" + name.get<std::string>()));
        condition.test_run =
            colsim::read_trajectory_csv(dir + "/" + entry.at("test_file").get<std::string>());
        corpus.conditions.push_back(std::move(condition));
    }
    for (const auto& name : manifest.at("fulldata").at("train_files"))
        corpus.fulldata_pool.push_back(
            colsim::read_trajectory_csv(dir + "/" + name.get<std::string>()));
    return corpus;
}

void cmd_gen_data(const ExperimentConfig& config) {
    ensure_directory(config.output_dir);
    const std::string& dir = config.output_dir;
    njson checksums = njson::object();

    if (config.scenario == Scenario::ColumnSysid) {
        const ColumnCorpus corpus = build_column_corpus(config.data);
        njson manifest = manifest_skeleton("column_sysid", config.data);
        manifest["target_vapor_rate"] = config.data.target_vapor_rate;
        manifest["test_hours"] = config.data.test_hours;
        njson conditions = njson::array();
        for (std::size_t i = 0; i < corpus.conditions.size(); ++i) {
            const ColumnCondition& condition = corpus.conditions[i];
            const std::string stem = "train_c" + std::to_string(i + 1);
            njson entry;
            entry["client"] = i + 1;
            entry["vapor_rate"] = condition.vapor_rate;
            entry["is_target"] = condition.is_target;
            njson train_files = njson::array();
            for (std::size_t t = 0; t < condition.train_pool.size(); ++t) {
                const std::string name = indexed_name(stem, t);
                colsim::write_trajectory_csv(dir + "/" + name, condition.train_pool[t]);
                checksums[name] = file_checksum_hex(dir + "/" + name);
                train_files.push_back(name);
            }
            const std::string test_name = "test_c" + std::to_string(i + 1) + ".csv";
            colsim::write_trajectory_csv(dir + "/" + test_name, condition.test_run);
            checksums[test_name] = file_checksum_hex(dir + "/" + test_name);
            entry["train_files"] = std::move(train_files);
            entry["test_file"] = test_name;
            conditions.push_back(std::move(entry));
        }
        njson fulldata;
        fulldata["vapor_rate"] = config.data.target_vapor_rate;
        njson full_files = njson::array();
        for (std::size_t t = 0; t < corpus.fulldata_pool.size(); ++t) {
            const std::string name = indexed_name("fulldata", t);
            colsim::write_trajectory_csv(dir + "/" + name, corpus.fulldata_pool[t]);
            checksums[name] = file_checksum_hex(dir + "/" + name);
            full_files.push_back(name);
        }
        fulldata["train_files"] = std::move(full_files);
        manifest["conditions"] = std::move(conditions);
        manifest["fulldata"] = std::move(fulldata);
        manifest["checksums"] = std::move(checksums);
        write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
        return;
    }

    if (!config.data.activity_csv.empty())
        throw ConfigError("gen-data needs a synthetic data source; the config already "
                          "points at " + config.data.activity_csv);
    const std::vector<data::ActivitySample> samples =
        data::generate_synthetic_activity(config.data.seed, config.data.n_samples);
    data::write_activity_csv(dir + "/activity.csv", samples);
    checksums["activity.csv"] = file_checksum_hex(dir + "/activity.csv");

    njson manifest = manifest_skeleton("activity", config.data);
    manifest["n_samples"] = samples.size();
    manifest["files"] = njson::array({"activity.csv"});
    manifest["checksums"] = std::move(checksums);
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

} // namespace fedsilo::runner
