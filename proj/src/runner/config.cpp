// Experiment configuration: JSON parsing with profile defaults, override
// layering, validation, and the small file helpers every command shares.

#include "runner/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "common/errors.hpp"
#include "num/rng.hpp"

namespace fedsilo::runner {

namespace {

using njson = nlohmann::ordered_json;

// ---- typed field extraction with path-qualified diagnostics ---------------

[[noreturn]] void bad_field(const std::string& path, const char* key, const std::string& want) {
    throw ConfigError("config field '" + path + key + "' " + want);
}

std::string sub_path(const std::string& path, const char* key) {
    return path + key + ".";
}

void require_object(const njson& node, const std::string& label) {
    if (!node.is_object()) throw ConfigError("config section '" + label + "' must be an object");
}

void reject_unknown_keys(const njson& obj, const std::string& path,
                         std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) known = known || item.key() == key;
        if (!known) throw ConfigError("unknown config key '" + path + item.key() + "'");
    }
}

std::size_t get_size(const njson& obj, const std::string& path, const char* key,
                     std::size_t def) {
    if (!obj.contains(key)) return def;
    const njson& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        bad_field(path, key, "must be a non-negative integer");
    return static_cast<std::size_t>(v.get<long long>());
}

std::uint64_t get_u64(const njson& obj, const std::string& path, const char* key,
                      std::uint64_t def) {
    if (!obj.contains(key)) return def;
    const njson& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        bad_field(path, key, "must be a non-negative integer");
    return v.get<std::uint64_t>();
}

double get_double(const njson& obj, const std::string& path, const char* key, double def) {
    if (!obj.contains(key)) return def;
    const njson& v = obj.at(key);
    if (!v.is_number()) bad_field(path, key, "must be a number");
    return v.get<double>();
}

std::string get_string(const njson& obj, const std::string& path, const char* key,
                       const std::string& def) {
    if (!obj.contains(key)) return def;
    const njson& v = obj.at(key);
    if (!v.is_string()) bad_field(path, key, "must be a string");
    return v.get<std::string>();
}

bool get_bool(const njson& obj, const std::string& path, const char* key, bool def) {
    if (!obj.contains(key)) return def;
    const njson& v = obj.at(key);
    if (!v.is_boolean()) bad_field(path, key, "must be true or false");
    return v.get<bool>();
}

std::vector<double> get_double_array(const njson& obj, const std::string& path, const char* key,
                                     std::vector<double> def) {
    if (!obj.contains(key)) return def;
    const njson& v = obj.at(key);
    if (!v.is_array()) bad_field(path, key, "must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) bad_field(path, key, "must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

// ---- profile defaults ------------------------------------------------------

struct ProfileDefaults {
    std::size_t n_samples;
    std::size_t rich_trajectories;
    std::size_t rounds;
    std::size_t local_epochs;
    std::size_t message_width;
    std::size_t head_width;
    std::size_t autoencoder_width;
};

// The desk schedules differ per case: the mixture tasks do well with long
// local phases, while the column tasks want frequent averaging (long local
// phases let the plant models drift apart faster than the mean can follow).
ProfileDefaults profile_defaults(Profile profile, Scenario scenario) {
    const bool column = scenario == Scenario::ColumnSysid;
    if (profile == Profile::Paper)
        return {.n_samples = 18016,
                .rich_trajectories = 192,
                .rounds = 30,
                .local_epochs = 150,
                .message_width = 64,
                .head_width = 64,
                .autoencoder_width = 32};
    return {.n_samples = 2000,
            .rich_trajectories = 24,
            .rounds = column ? std::size_t{30} : std::size_t{10},
            .local_epochs = column ? std::size_t{10} : std::size_t{20},
            .message_width = 16,
            .head_width = 16,
            .autoencoder_width = 16};
}

fed::AggregationMode parse_aggregation(const std::string& name) {
    if (name == "fedavg_full") return fed::AggregationMode::FedAvgFull;
    if (name == "fedper_partial") return fed::AggregationMode::FedPerPartial;
    throw ConfigError("unknown aggregation '" + name +
                      "' (expected fedavg_full or fedper_partial)");
}

fed::TransportKind parse_transport(const std::string& name) {
    if (name == "in_process") return fed::TransportKind::InProcess;
    if (name == "socket") return fed::TransportKind::Socket;
    throw ConfigError("unknown transport '" + name + "' (expected in_process or socket)");
}

// Resolves the client count against the scenario: even-random takes it from
// the config (default 4), the scaffold partition is four-way by construction,
// and the column case has one plant per operating condition. An explicit
// count that contradicts the scenario is an invocation mistake.
void normalize_clients(ExperimentConfig& cfg, std::size_t explicit_clients) {
    switch (cfg.scenario) {
    case Scenario::ActivityEvenRandom:
        cfg.clients = explicit_clients == 0 ? 4 : explicit_clients;
        return;
    case Scenario::ActivityUnevenScaffold:
        if (explicit_clients != 0 && explicit_clients != 4)
            throw ConfigError("activity_uneven_scaffold always runs 4 clients");
        cfg.clients = 4;
        return;
    case Scenario::ColumnSysid:
        if (explicit_clients != 0 && explicit_clients != cfg.data.vapor_rates.size())
            throw ConfigError("column_sysid runs one client per entry of data.vapor_rates");
        cfg.clients = cfg.data.vapor_rates.size();
        return;
    }
    throw ConfigError("unreachable scenario value");
}

void validate_experiment(const ExperimentConfig& cfg) {
    if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
    if (cfg.num_seeds == 0) throw ConfigError("num_seeds must be at least 1");

    const bool column = cfg.scenario == Scenario::ColumnSysid;
    if (!cfg.data.column_dir.empty() && !column)
        throw ConfigError("data.column_dir only applies to the column_sysid scenario");
    if (!cfg.data.activity_csv.empty() && column)
        throw ConfigError("data.activity_csv does not apply to the column_sysid scenario");

    if (column) {
        const auto& rates = cfg.data.vapor_rates;
        if (rates.size() < 2)
            throw ConfigError("data.vapor_rates needs at least two operating conditions");
        for (std::size_t i = 1; i < rates.size(); ++i)
            if (!(rates[i - 1] < rates[i]))
                throw ConfigError("data.vapor_rates must be strictly ascending");
        if (std::find(rates.begin(), rates.end(), cfg.data.target_vapor_rate) == rates.end())
            throw ConfigError("data.target_vapor_rate must be one of data.vapor_rates");
        if (cfg.data.rich_trajectories < 2 || cfg.data.target_trajectories < 2)
            throw ConfigError("trajectory counts must be at least 2 per plant "
                              "(one training and one validation run)");
        if (!(cfg.data.test_hours > 0.0)) throw ConfigError("data.test_hours must be positive");
    } else if (cfg.data.activity_csv.empty()) {
        // Synthetic source: every client must end up with a usable split.
        if (cfg.data.n_samples < 2 * client_count(cfg))
            throw ConfigError("data.n_samples is too small for the client count");
    }

    if (cfg.federation.mode == fed::AggregationMode::FedPerPartial &&
        cfg.scenario != Scenario::ActivityUnevenScaffold && !cfg.allow_fedper_anywhere)
        throw ConfigError("fedper_partial is paired with activity_uneven_scaffold; set "
                          "federation.allow_fedper_anywhere to override");

    // Schedule sanity now rather than at run time; the shared-segment list is
    // resolved per model, so validate with a stand-in.
    fed::FederationConfig probe = cfg.federation;
    if (probe.mode == fed::AggregationMode::FedPerPartial) probe.shared_segments = {"stand-in"};
    fed::validate_config(probe);

    if (cfg.model.message_width == 0 || cfg.model.head_width == 0 ||
        cfg.model.autoencoder_width == 0 || cfg.model.latent_dim == 0)
        throw ConfigError("model widths must be positive");
}

} // namespace

std::string scenario_name(Scenario scenario) {
    switch (scenario) {
    case Scenario::ActivityEvenRandom: return "activity_even_random";
    case Scenario::ActivityUnevenScaffold: return "activity_uneven_scaffold";
    case Scenario::ColumnSysid: return "column_sysid";
    }
    throw ConfigError("unreachable scenario value");
}

Scenario parse_scenario(const std::string& name) {
    if (name == "activity_even_random") return Scenario::ActivityEvenRandom;
    if (name == "activity_uneven_scaffold") return Scenario::ActivityUnevenScaffold;
    if (name == "column_sysid") return Scenario::ColumnSysid;
    throw ConfigError("unknown scenario '" + name +
                      "' (expected activity_even_random, activity_uneven_scaffold, "
                      "or column_sysid)");
}

std::string profile_name(Profile profile) {
    return profile == Profile::Paper ? "paper" : "desk";
}

Profile parse_profile(const std::string& name) {
    if (name == "desk") return Profile::Desk;
    if (name == "paper") return Profile::Paper;
    throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

std::size_t client_count(const ExperimentConfig& config) {
    return config.clients; // normalized against the scenario at parse time
}

ExperimentConfig parse_experiment(const std::string& json_text, const Overrides& overrides) {
    njson root;
    try {
        root = njson::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    require_object(root, "<root>");
    reject_unknown_keys(root, "", {"scenario", "profile", "output_dir", "num_seeds", "base_seed",
                                   "data", "federation", "model"});
    if (!root.contains("scenario")) throw ConfigError("config needs a 'scenario' field");

    ExperimentConfig cfg;
    cfg.scenario = parse_scenario(get_string(root, "", "scenario", ""));
    cfg.profile = overrides.profile ? *overrides.profile
                                    : parse_profile(get_string(root, "", "profile", "desk"));
    const ProfileDefaults d = profile_defaults(cfg.profile, cfg.scenario);

    cfg.output_dir = get_string(root, "", "output_dir", cfg.output_dir);
    cfg.num_seeds = get_size(root, "", "num_seeds", cfg.num_seeds);
    cfg.base_seed = get_u64(root, "", "base_seed", cfg.base_seed);

    njson data = root.value("data", njson::object());
    require_object(data, "data");
    reject_unknown_keys(data, "data.",
                        {"seed", "n_samples", "activity_csv", "column_dir", "vapor_rates",
                         "target_vapor_rate", "rich_trajectories", "target_trajectories",
                         "test_hours"});
    const std::string dp = sub_path("", "data");
    cfg.data.seed = get_u64(data, dp, "seed", cfg.data.seed);
    cfg.data.n_samples = get_size(data, dp, "n_samples", d.n_samples);
    cfg.data.activity_csv = get_string(data, dp, "activity_csv", "");
    cfg.data.column_dir = get_string(data, dp, "column_dir", "");
    cfg.data.vapor_rates = get_double_array(data, dp, "vapor_rates", cfg.data.vapor_rates);
    cfg.data.target_vapor_rate = get_double(data, dp, "target_vapor_rate",
                                            cfg.data.target_vapor_rate);
    cfg.data.rich_trajectories = get_size(data, dp, "rich_trajectories", d.rich_trajectories);
    cfg.data.target_trajectories =
        get_size(data, dp, "target_trajectories", cfg.data.target_trajectories);
    cfg.data.test_hours = get_double(data, dp, "test_hours", cfg.data.test_hours);

    njson fede = root.value("federation", njson::object());
    require_object(fede, "federation");
    reject_unknown_keys(fede, "federation.",
                        {"clients", "rounds", "local_epochs", "batch_size", "lr0", "lr_decay",
                         "early_stop_patience", "aggregation", "transport", "port",
                         "allow_fedper_anywhere"});
    const std::string fp = sub_path("", "federation");
    const std::size_t explicit_clients = get_size(fede, fp, "clients", 0);
    cfg.federation.rounds = get_size(fede, fp, "rounds", d.rounds);
    cfg.federation.local_epochs = get_size(fede, fp, "local_epochs", d.local_epochs);
    // Batches count samples for the activity tasks but whole trajectories for
    // the column tasks, so the defaults differ accordingly.
    const std::size_t default_batch = cfg.scenario == Scenario::ColumnSysid ? 4 : 32;
    cfg.federation.batch_size = get_size(fede, fp, "batch_size", default_batch);
    const double default_lr0 = cfg.scenario == Scenario::ColumnSysid ? 0.2 : 0.02;
    cfg.federation.lr0 = get_double(fede, fp, "lr0", default_lr0);
    cfg.federation.lr_decay = get_double(fede, fp, "lr_decay", cfg.federation.lr_decay);
    cfg.federation.early_stop_patience =
        get_size(fede, fp, "early_stop_patience", cfg.federation.early_stop_patience);
    const char* default_aggregation = cfg.scenario == Scenario::ActivityUnevenScaffold
                                          ? "fedper_partial"
                                          : "fedavg_full";
    cfg.federation.mode =
        parse_aggregation(get_string(fede, fp, "aggregation", default_aggregation));
    cfg.federation.transport = parse_transport(get_string(fede, fp, "transport", "in_process"));
    std::size_t port = get_size(fede, fp, "port", 0);
    if (port > 65535) bad_field(fp, "port", "must fit a TCP port");
    cfg.federation.port = static_cast<std::uint16_t>(port);
    cfg.allow_fedper_anywhere = get_bool(fede, fp, "allow_fedper_anywhere", false);

    njson model = root.value("model", njson::object());
    require_object(model, "model");
    reject_unknown_keys(model, "model.",
                        {"message_width", "head_width", "autoencoder_width", "latent_dim"});
    const std::string mp = sub_path("", "model");
    cfg.model.message_width = get_size(model, mp, "message_width", d.message_width);
    cfg.model.head_width = get_size(model, mp, "head_width", d.head_width);
    cfg.model.autoencoder_width = get_size(model, mp, "autoencoder_width", d.autoencoder_width);
    cfg.model.latent_dim = get_size(model, mp, "latent_dim", cfg.model.latent_dim);

    if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
    if (overrides.seed) {
        cfg.base_seed = *overrides.seed;
        cfg.num_seeds = 1;
    }
    if (overrides.rounds) cfg.federation.rounds = *overrides.rounds;

    normalize_clients(cfg, explicit_clients);
    validate_experiment(cfg);
    return cfg;
}

ExperimentConfig load_experiment(const std::string& path, const Overrides& overrides) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const IoError& e) {
        // A bad --config path is an invocation mistake, not a runtime failure.
        throw ConfigError(e.what());
    }
    return parse_experiment(text, overrides);
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path);
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + path);
}

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string text_checksum_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(num::CounterRng::fnv1a(bytes)));
    return buf;
}

std::string file_checksum_hex(const std::string& path) {
    return text_checksum_hex(read_text_file(path));
}

} // namespace fedsilo::runner
