#ifndef FEDSILO_FEDSILO_H
#define FEDSILO_FEDSILO_H

/* C interface to the federated-simulation experiment runner. A handle wraps
 * one experiment description (a JSON config file plus optional overrides);
 * the three commands materialize data, run the training arms, and distill
 * reports. Every command returns an exit-code style status and, on failure,
 * a NUL-terminated diagnostic in the caller's buffer. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define FEDSILO_OK 0           /* command completed */
#define FEDSILO_ERR_RUNTIME 1  /* I/O, numeric, or training failure */
#define FEDSILO_ERR_USAGE 2    /* bad configuration or invocation */

typedef struct fedsilo_experiment fedsilo_experiment;

/* Loads and validates an experiment config. Returns NULL on failure, with
 * *status set to FEDSILO_ERR_USAGE or FEDSILO_ERR_RUNTIME and a diagnostic
 * in errbuf (if errbuf_len > 0). status and errbuf may be NULL. */
fedsilo_experiment* fedsilo_experiment_load(const char* config_path, int* status, char* errbuf,
                                            size_t errbuf_len);

void fedsilo_experiment_free(fedsilo_experiment* experiment);

/* Overrides layered on top of the config file. Each returns FEDSILO_OK or
 * FEDSILO_ERR_USAGE (diagnostic in errbuf). */
int fedsilo_experiment_set_output_dir(fedsilo_experiment* experiment, const char* dir,
                                      char* errbuf, size_t errbuf_len);
int fedsilo_experiment_set_profile(fedsilo_experiment* experiment, const char* profile,
                                   char* errbuf, size_t errbuf_len);
/* Pins a single repetition: base seed = seed, seed count = 1. */
int fedsilo_experiment_set_seed(fedsilo_experiment* experiment, uint64_t seed, char* errbuf,
                                size_t errbuf_len);
int fedsilo_experiment_set_rounds(fedsilo_experiment* experiment, uint64_t rounds, char* errbuf,
                                  size_t errbuf_len);

/* Commands. Each resolves the config with the overrides applied, executes,
 * and returns FEDSILO_OK / FEDSILO_ERR_RUNTIME / FEDSILO_ERR_USAGE. */
int fedsilo_gen_data(const fedsilo_experiment* experiment, char* errbuf, size_t errbuf_len);
int fedsilo_run(const fedsilo_experiment* experiment, char* errbuf, size_t errbuf_len);
int fedsilo_report(const fedsilo_experiment* experiment, char* errbuf, size_t errbuf_len);

const char* fedsilo_version(void);

#ifdef __cplusplus
}
#endif

#endif /* FEDSILO_FEDSILO_H */
