// C shim over the experiment runner: opaque handle, override setters, and
// exit-code mapping (usage mistakes 2, runtime failures 1).

#include "fedsilo/fedsilo.h"

#include <cstring>
#include <exception>
#include <string>

#include "common/errors.hpp"
#include "runner/runner.hpp"

using fedsilo::ConfigError;
namespace runner = fedsilo::runner;

struct fedsilo_experiment {
    std::string config_path;
    runner::Overrides overrides;
};

namespace {

void set_error(char* errbuf, size_t errbuf_len, const std::string& message) {
    if (errbuf == nullptr || errbuf_len == 0) return;
    const size_t n = std::min(message.size(), errbuf_len - 1);
    std::memcpy(errbuf, message.data(), n);
    errbuf[n] = '\0';
}

int status_of(const std::exception& e) {
    return dynamic_cast<const ConfigError*>(&e) != nullptr ? FEDSILO_ERR_USAGE
                                                           : FEDSILO_ERR_RUNTIME;
}

template <typename Fn>
int guarded(Fn&& fn, char* errbuf, size_t errbuf_len) {
    try {
        fn();
        return FEDSILO_OK;
    } catch (const std::exception& e) {
        set_error(errbuf, errbuf_len, e.what());
        return status_of(e);
    } catch (...) {
        set_error(errbuf, errbuf_len, "unknown failure");
        return FEDSILO_ERR_RUNTIME;
    }
}

int require_handle(const fedsilo_experiment* experiment, char* errbuf, size_t errbuf_len) {
    if (experiment != nullptr) return FEDSILO_OK;
    set_error(errbuf, errbuf_len, "experiment handle is NULL");
    return FEDSILO_ERR_USAGE;
}

} // namespace

extern "C" {

fedsilo_experiment* fedsilo_experiment_load(const char* config_path, int* status, char* errbuf,
                                            size_t errbuf_len) {
    if (status != nullptr) *status = FEDSILO_OK;
    if (config_path == nullptr) {
        set_error(errbuf, errbuf_len, "config path is NULL");
        if (status != nullptr) *status = FEDSILO_ERR_USAGE;
        return nullptr;
    }
    auto* handle = new fedsilo_experiment{config_path, {}};
    const int rc = guarded([&] { runner::load_experiment(handle->config_path); }, errbuf,
                           errbuf_len);
    if (rc != FEDSILO_OK) {
        delete handle;
        if (status != nullptr) *status = rc;
        return nullptr;
    }
    return handle;
}

void fedsilo_experiment_free(fedsilo_experiment* experiment) {
    delete experiment;
}

int fedsilo_experiment_set_output_dir(fedsilo_experiment* experiment, const char* dir,
                                      char* errbuf, size_t errbuf_len) {
    int rc = require_handle(experiment, errbuf, errbuf_len);
    if (rc != FEDSILO_OK) return rc;
    if (dir == nullptr || *dir == '\0') {
        set_error(errbuf, errbuf_len, "output directory must not be empty");
        return FEDSILO_ERR_USAGE;
    }
    experiment->overrides.output_dir = dir;
    return FEDSILO_OK;
}

int fedsilo_experiment_set_profile(fedsilo_experiment* experiment, const char* profile,
                                   char* errbuf, size_t errbuf_len) {
    int rc = require_handle(experiment, errbuf, errbuf_len);
    if (rc != FEDSILO_OK) return rc;
    if (profile == nullptr) {
        set_error(errbuf, errbuf_len, "profile is NULL");
        return FEDSILO_ERR_USAGE;
    }
    return guarded([&] { experiment->overrides.profile = runner::parse_profile(profile); },
                   errbuf, errbuf_len);
}

int fedsilo_experiment_set_seed(fedsilo_experiment* experiment, uint64_t seed, char* errbuf,
                                size_t errbuf_len) {
    int rc = require_handle(experiment, errbuf, errbuf_len);
    if (rc != FEDSILO_OK) return rc;
    experiment->overrides.seed = seed;
    return FEDSILO_OK;
}

int fedsilo_experiment_set_rounds(fedsilo_experiment* experiment, uint64_t rounds, char* errbuf,
                                  size_t errbuf_len) {
    int rc = require_handle(experiment, errbuf, errbuf_len);
    if (rc != FEDSILO_OK) return rc;
    if (rounds == 0) {
        set_error(errbuf, errbuf_len, "rounds must be at least 1");
        return FEDSILO_ERR_USAGE;
    }
    experiment->overrides.rounds = static_cast<std::size_t>(rounds);
    return FEDSILO_OK;
}

int fedsilo_gen_data(const fedsilo_experiment* experiment, char* errbuf, size_t errbuf_len) {
    int rc = require_handle(experiment, errbuf, errbuf_len);
    if (rc != FEDSILO_OK) return rc;
    return guarded(
        [&] {
            runner::cmd_gen_data(
                runner::load_experiment(experiment->config_path, experiment->overrides));
        },
        errbuf, errbuf_len);
}

int fedsilo_run(const fedsilo_experiment* experiment, char* errbuf, size_t errbuf_len) {
    int rc = require_handle(experiment, errbuf, errbuf_len);
    if (rc != FEDSILO_OK) return rc;
    return guarded(
        [&] {
            runner::cmd_run(
                runner::load_experiment(experiment->config_path, experiment->overrides));
        },
        errbuf, errbuf_len);
}

int fedsilo_report(const fedsilo_experiment* experiment, char* errbuf, size_t errbuf_len) {
    int rc = require_handle(experiment, errbuf, errbuf_len);
    if (rc != FEDSILO_OK) return rc;
    return guarded(
        [&] {
            runner::cmd_report(
                runner::load_experiment(experiment->config_path, experiment->overrides));
        },
        errbuf, errbuf_len);
}

const char* fedsilo_version(void) {
    return "0.1.0";
}

} // extern "C"
