#pragma once

// Dataset plumbing: activity-coefficient sample ingestion and synthesis,
// train/val/test splitting, client partitioning, and min-max scaling.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "colsim/trajectory.hpp"
#include "num/tensor.hpp"

namespace fedsilo::data {

// One binary mixture measured at infinite dilution of the solute.
struct ActivitySample {
    std::string solute_smiles;
    std::string solvent_smiles;
    double temperature_k = 0.0;
    double ln_gamma_inf = 0.0;
};

struct RejectionRecord {
    std::size_t line = 0; // 1-based line number in the source file
    std::string reason;
};

struct IngestResult {
    std::vector<ActivitySample> samples;
    std::vector<RejectionRecord> rejected;
};

// Reads a CSV with header columns solute_smiles, solvent_smiles,
// temperature_K, ln_gamma_inf (extra columns ignored). Rows whose SMILES do
// not parse, or whose numeric fields are malformed or non-positive in
// temperature, land in `rejected` with a reason instead of aborting the load.
IngestResult ingest_activity_csv(const std::string& path);

void write_activity_csv(const std::string& path, const std::vector<ActivitySample>& samples);

// Built-in molecule library used by the synthetic generator: a few hundred
// small organics (alkanes, alcohols, ethers, ketones, acids, esters, amines,
// halides, aromatics, saturated rings). Roughly four fifths are ring-free so
// scaffold-based partitions with acyclic-only clients remain feasible.
const std::vector<std::string>& builtin_molecule_corpus();

// Noise-free surrogate label: a polarity/size contrast between solute and
// solvent with a mild temperature dependence. Symmetric inputs give 0.
double synthetic_activity_label(const std::string& solute_smiles,
                                const std::string& solvent_smiles, double temperature_k);

// Draws solute/solvent pairs from the built-in corpus with T ~ U[280, 360] K
// and gaussian label noise (sigma 0.05). Deterministic in `seed`.
std::vector<ActivitySample> generate_synthetic_activity(std::uint64_t seed,
                                                        std::size_t n_samples);

// ---------------------------------------------------------------------------
// Splitting and partitioning
// ---------------------------------------------------------------------------

// Apportions n into integer counts proportional to `fractions` using
// largest-remainder rounding; remainder ties go to the lower index.
std::vector<std::size_t> largest_remainder_counts(std::size_t n,
                                                  const std::vector<double>& fractions);

struct Splits {
    std::vector<std::size_t> train, val, test;
};

// 70/15/15 sizes by largest remainder (ties: train, then val, then test),
// then a minimum-one guarantee applied in the same order so tiny datasets
// still yield usable train/val sets (2 samples -> 1/1/0, 3 -> 1/1/1).
struct SplitSizes {
    std::size_t train = 0, val = 0, test = 0;
};
SplitSizes split_sizes(std::size_t n);

// Splits index range [0, n) by a seeded shuffle of the index order.
Splits split_indices(std::size_t n, std::uint64_t seed);

// Splits activity samples; indices refer to `samples`. The shuffle acts on a
// canonical order (samples pre-sorted by a stable content key) so the result
// does not depend on the incoming row order.
Splits split_train_val_test(const std::vector<ActivitySample>& samples, std::uint64_t seed);

struct ActivityClient {
    std::uint32_t client_id = 0; // 1-based
    std::vector<ActivitySample> samples;
    Splits splits; // indices into `samples`
    std::size_t train_count() const { return splits.train.size(); }
};

// Seeded shuffle into contiguous near-equal blocks (largest remainder on the
// leftover samples), then a per-client 70/15/15 split.
std::vector<ActivityClient> partition_even_random(const std::vector<ActivitySample>& samples,
                                                  std::size_t k_clients, std::uint64_t seed);

// Non-iid partition keyed by the scaffold of the SOLVENT. Samples with an
// acyclic solvent are split between clients 1 and 2 in proportion to their
// target fractions; each remaining scaffold group is assigned whole to
// client 3 or 4, whichever is further below its target. Client targets come
// from largest-remainder rounding of `fractions` over the dataset size.
std::vector<ActivityClient> partition_uneven_scaffold(
    const std::vector<ActivitySample>& samples, std::uint64_t seed,
    const std::array<double, 4>& fractions = {0.4, 0.3, 0.2, 0.1});

// Target sizes used by partition_uneven_scaffold, exposed for reporting.
std::array<std::size_t, 4> uneven_scaffold_targets(std::size_t n,
                                                   const std::array<double, 4>& fractions);

struct TrajectoryClient {
    std::uint32_t client_id = 0; // 1-based, ascending vapor rate
    double vapor_rate = 0.0;
    bool is_target = false;
    std::vector<colsim::Trajectory> trajectories;
    Splits splits; // indices into `trajectories`
    std::size_t train_count() const { return splits.train.size(); }
};

// One client per operating condition (vapor rate); the client matching
// `target_vapor_rate` is tagged. Trajectory sets keep their generation
// order; splits shuffle indices per client.
std::vector<TrajectoryClient> partition_by_condition(
    std::vector<std::pair<double, std::vector<colsim::Trajectory>>> sets,
    double target_vapor_rate, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Min-max scaling
// ---------------------------------------------------------------------------

class MinMaxScaler {
  public:
    // Fits per-column (min, max) over the rows of `source`. Columns with
    // max == min are flagged constant and transform to 0.
    static MinMaxScaler fit(const num::Tensor& source);

    num::Tensor transform(const num::Tensor& rows) const;
    num::Tensor inverse(const num::Tensor& rows) const;
    double transform_value(std::size_t dim, double v) const;
    double invert_value(std::size_t dim, double v) const;

    std::size_t dims() const { return min_.size(); }
    bool fitted() const { return !min_.empty(); }
    const std::vector<std::size_t>& constant_dims() const { return constant_dims_; }

  private:
    std::vector<double> min_, max_;
    std::vector<std::size_t> constant_dims_;
    void require_fitted(std::size_t dim) const;
};

// Stacks [states | inputs] rows of all trajectories into one (sum of lengths)
// x (state_dim + input_dim) matrix, in trajectory order.
num::Tensor stack_trajectory_rows(const std::vector<colsim::Trajectory>& trajectories);

// Applies the scaler column-wise to a trajectory's states and inputs
// (states first, then inputs, matching stack_trajectory_rows).
colsim::Trajectory scale_trajectory(const MinMaxScaler& scaler,
                                    const colsim::Trajectory& trajectory);

} // namespace fedsilo::data
