#pragma once

// Experiment orchestration: JSON configuration with desk/paper profiles,
// dataset materialization (gen-data), multi-seed runs of the private /
// centralized / federated arms (run), and plot-ready CSV extraction (report).

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "colsim/column.hpp"
#include "data/data.hpp"
#include "fed/federation.hpp"
#include "fed/tasks.hpp"
#include "models/models.hpp"

namespace fedsilo::runner {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Scenario { ActivityEvenRandom, ActivityUnevenScaffold, ColumnSysid };

std::string scenario_name(Scenario scenario);
Scenario parse_scenario(const std::string& name); // ConfigError on unknown names

// "desk" keeps runs laptop-sized; "paper" restores the full-scale schedule
// (30 rounds, 150 local epochs, 192 trajectories per data-rich plant).
enum class Profile { Desk, Paper };

std::string profile_name(Profile profile);
Profile parse_profile(const std::string& name);

// Data source. Synthetic generation is the default; activity runs may ingest
// a CSV instead, and column runs may load a directory written by gen-data.
struct DataConfig {
    std::uint64_t seed = 7;
    std::size_t n_samples = 2000; // synthetic activity rows
    std::string activity_csv;     // optional: ingest instead of generating
    std::string column_dir;       // optional: load a gen-data directory
    std::vector<double> vapor_rates{1.6, 1.7, 1.8, 1.9, 2.0};
    double target_vapor_rate = 1.9;
    std::size_t rich_trajectories = 24;   // training runs per data-rich plant
    std::size_t target_trajectories = 2;  // training runs for the scarce plant
    double test_hours = 5.0;              // length of each held-out test run
};

struct ModelConfig {
    std::size_t message_width = 16;
    std::size_t head_width = 16;
    std::size_t autoencoder_width = 16;
    std::size_t latent_dim = 2;
};

struct ExperimentConfig {
    Scenario scenario = Scenario::ActivityEvenRandom;
    Profile profile = Profile::Desk;
    std::string output_dir = "out";
    std::size_t num_seeds = 10;
    std::uint64_t base_seed = 100;
    std::size_t clients = 4; // resolved at parse time: configurable for
                             // even-random, four for the scaffold partition,
                             // one per vapor rate for the column case
    bool allow_fedper_anywhere = false;
    DataConfig data;
    fed::FederationConfig federation; // shared segments resolved per model
    ModelConfig model;
};

// Command-line overrides layered on top of the config file. A seed override
// pins base_seed and forces num_seeds to 1.
struct Overrides {
    std::optional<std::string> output_dir;
    std::optional<Profile> profile;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> rounds;
};

// Parses and validates an experiment description. Unknown keys, malformed
// values, and scenario/aggregation mismatches (FedPer outside the
// uneven-scaffold scenario without allow_fedper_anywhere) raise ConfigError.
ExperimentConfig parse_experiment(const std::string& json_text,
                                  const Overrides& overrides = {});
ExperimentConfig load_experiment(const std::string& path, const Overrides& overrides = {});

// Number of participating clients after scenario-specific derivation.
std::size_t client_count(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Dataset materialization
// ---------------------------------------------------------------------------

// One operating condition of the column case: a pool of short training runs
// plus one long held-out test run, both under random step programs.
struct ColumnCondition {
    double vapor_rate = 0.0;
    bool is_target = false;
    std::vector<colsim::Trajectory> train_pool;
    colsim::Trajectory test_run;
};

struct ColumnCorpus {
    std::vector<ColumnCondition> conditions;       // ascending vapor rate
    std::vector<colsim::Trajectory> fulldata_pool; // rich-sized pool at the
                                                   // target rate (baseline arm)
};

// Simulates the corpus from scratch (deterministic in data.seed).
ColumnCorpus build_column_corpus(const DataConfig& data);

// Reads a gen-data directory back, verifying every file against the manifest
// checksums (mismatch or missing file raises IoError).
ColumnCorpus load_column_corpus(const std::string& dir);

// Synthetic generation or CSV ingestion, per the config.
std::vector<data::ActivitySample> load_activity_samples(const DataConfig& data);

// ---------------------------------------------------------------------------
// Scenario assembly (one seed)
// ---------------------------------------------------------------------------

// Everything one repetition needs: the seeded model spec, one task per
// client, the pooled task for the centralized arm, and for the column case a
// rich same-condition task backing the full-data baseline. The molecule cache
// owns the featurized graphs the activity tasks point into.
struct ScenarioBundle {
    models::ModelSpec spec;
    std::unique_ptr<fed::MoleculeCache> cache;
    std::vector<std::unique_ptr<fed::ClientTask>> clients;
    std::unique_ptr<fed::ClientTask> pooled;
    std::unique_ptr<fed::ClientTask> fulldata;
    std::size_t target_index = 0; // column: scarce plant; activity: smallest
                                  // training set (ties to the lowest id)
    std::vector<std::size_t> train_sizes;

    std::vector<fed::ClientTask*> client_ptrs() const;
};

models::ModelSpec make_model_spec(const ExperimentConfig& config, std::uint64_t run_seed);

// Federation schedule for one repetition: seeded, with the shared-segment
// list resolved from the model when aggregation is partial.
fed::FederationConfig resolved_federation(const ExperimentConfig& config,
                                          const models::ModelSpec& spec,
                                          std::uint64_t run_seed);

ScenarioBundle build_activity_bundle(const ExperimentConfig& config,
                                     const std::vector<data::ActivitySample>& samples,
                                     std::uint64_t run_seed);
ScenarioBundle build_column_bundle(const ExperimentConfig& config, const ColumnCorpus& corpus,
                                   std::uint64_t run_seed);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

// Writes the configured dataset plus manifest.json (seeds, counts, per-file
// checksums) into output_dir. Activity runs need a synthetic source; reruns
// with the same seed produce identical bytes. Unwritable paths raise IoError.
void cmd_gen_data(const ExperimentConfig& config);

// Runs every seed through the private, centralized, and federated arms
// (column adds the full-data baseline) and writes rounds.csv, arms.csv,
// timing.csv, summary.json, and the schema the summary validates against.
void cmd_run(const ExperimentConfig& config);

// Distills a run directory into plot-ready CSVs: per-client MSE curves,
// global-vs-average-client-vs-centralized curves, and (column case) the
// per-arm box-plot table for the scarce plant. Rerunning is byte-identical;
// missing run outputs raise IoError.
void cmd_report(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Summary schema
// ---------------------------------------------------------------------------

// JSON schema for summary.json; the same bytes ship in share/ and are written
// next to every summary.
const std::string& summary_schema_text();

// Validates a summary document against the shipped schema (ConfigError names
// the offending path on mismatch).
void validate_summary_text(const std::string& summary_json);

// ---------------------------------------------------------------------------
// Small file helpers (shared by commands and tests)
// ---------------------------------------------------------------------------

std::string format_g17(double v); // %.17g, matching the CSV writers

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
void ensure_directory(const std::string& dir);

// FNV-1a of the raw bytes, as 16 lowercase hex digits.
std::string text_checksum_hex(std::string_view bytes);
std::string file_checksum_hex(const std::string& path);

} // namespace fedsilo::runner
