// fedsilo command-line front end. Thin by design: CLI11 parses the verbs and
// flags, everything else goes through the C API, and exit codes follow its
// convention (0 success, 1 runtime failure, 2 usage mistake).

#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "fedsilo/fedsilo.h"

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::string profile;
    std::int64_t seed = -1;
    std::int64_t rounds = -1;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "experiment description (JSON)")->required();
    cmd->add_option("--out", flags.out, "output directory (overrides the config)");
    cmd->add_option("--seed", flags.seed, "run a single repetition with this seed")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--rounds", flags.rounds, "communication rounds (overrides the config)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--profile", flags.profile, "configuration scale")
        ->check(CLI::IsMember({"desk", "paper"}));
}

int fail(const char* message) {
    std::fprintf(stderr, "fedsilo: %s\n", message);
    return FEDSILO_ERR_USAGE;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated training simulator for cross-company process models"};
    app.require_subcommand(1);

    CommonFlags flags;
    CLI::App* gen = app.add_subcommand("gen-data", "materialize the configured dataset");
    CLI::App* run = app.add_subcommand("run", "run the private, centralized, and federated arms");
    CLI::App* report = app.add_subcommand("report", "distill a run directory into plot tables");
    add_common_flags(gen, flags);
    add_common_flags(run, flags);
    add_common_flags(report, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e); // prints the parser's message
        return FEDSILO_ERR_USAGE;
    }

    char errbuf[1024] = {0};
    int status = FEDSILO_OK;
    fedsilo_experiment* experiment =
        fedsilo_experiment_load(flags.config.c_str(), &status, errbuf, sizeof errbuf);
    if (experiment == nullptr) {
        std::fprintf(stderr, "fedsilo: %s\n", errbuf);
        return status == FEDSILO_OK ? FEDSILO_ERR_RUNTIME : status;
    }

    int rc = FEDSILO_OK;
    if (!flags.out.empty())
        rc = fedsilo_experiment_set_output_dir(experiment, flags.out.c_str(), errbuf,
                                               sizeof errbuf);
    if (rc == FEDSILO_OK && !flags.profile.empty())
        rc = fedsilo_experiment_set_profile(experiment, flags.profile.c_str(), errbuf,
                                            sizeof errbuf);
    if (rc == FEDSILO_OK && flags.seed >= 0)
        rc = fedsilo_experiment_set_seed(experiment, static_cast<uint64_t>(flags.seed), errbuf,
                                         sizeof errbuf);
    if (rc == FEDSILO_OK && flags.rounds >= 0)
        rc = fedsilo_experiment_set_rounds(experiment, static_cast<uint64_t>(flags.rounds),
                                           errbuf, sizeof errbuf);

    if (rc == FEDSILO_OK) {
        if (gen->parsed()) rc = fedsilo_gen_data(experiment, errbuf, sizeof errbuf);
        else if (run->parsed()) rc = fedsilo_run(experiment, errbuf, sizeof errbuf);
        else if (report->parsed()) rc = fedsilo_report(experiment, errbuf, sizeof errbuf);
        else rc = fail("no command given");
    }
    if (rc != FEDSILO_OK && errbuf[0] != '\0')
        std::fprintf(stderr, "fedsilo: %s\n", errbuf);

    fedsilo_experiment_free(experiment);
    return rc;
}
