#pragma once

// Concrete client objectives for the two scenarios: mixture-property
// regression over activity samples and multistep system identification over
// column trajectories. Both expose the ClientTask surface the federation
// trains against, plus the bits the experiment runner reports on.

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "chem/chem.hpp"
#include "data/data.hpp"
#include "fed/federation.hpp"
#include "metrics/metrics.hpp"
#include "models/models.hpp"
#include "num/tape.hpp"

namespace fedsilo::fed {

// Featurizes each distinct SMILES once and hands out stable pointers, so
// batches containing the same molecule share one graph (batch assembly
// dedupes by pointer). Fill it single-threaded — task construction — before
// training threads start; lookups during training only read.
class MoleculeCache {
  public:
    const chem::FeaturizedMolecule* get(const std::string& smiles);
    std::size_t size() const { return cache_.size(); }

  private:
    std::unordered_map<std::string, std::unique_ptr<chem::FeaturizedMolecule>> cache_;
};

std::vector<data::ActivitySample> select_samples(const std::vector<data::ActivitySample>& samples,
                                                 const std::vector<std::size_t>& indices);

// Mixture-property regression on one client's activity samples. Temperatures
// are min-max scaled and labels standardized (zero mean, unit variance) by
// statistics fitted on this task's own training split, the way each company
// would normalize its own assay data. Reported MSE is therefore in units of
// the client's own label variance: a mean predictor scores about 1.
class ActivityTask final : public ClientTask {
  public:
    ActivityTask(std::vector<data::ActivitySample> train, std::vector<data::ActivitySample> val,
                 std::vector<data::ActivitySample> test, MoleculeCache& cache);
    ActivityTask(const data::ActivityClient& client, MoleculeCache& cache);

    std::size_t train_size() const override { return train_items_.size(); }
    num::EvalResult train_batch(const num::ParameterVector& params,
                                std::span<const std::size_t> rows) override;
    double validation_loss(const num::ParameterVector& params) override;
    double test_mse(const num::ParameterVector& params) override;

    // Full regression report (MSE/MAE/R^2) on the test split.
    metrics::MetricReport test_report(const num::ParameterVector& params);

    const data::MinMaxScaler& temperature_scaler() const { return scaler_; }
    double label_mean() const { return label_mean_; }
    double label_scale() const { return label_scale_; }

  private:
    data::MinMaxScaler scaler_;
    double label_mean_ = 0.0;
    double label_scale_ = 1.0;
    std::vector<models::MixtureItem> train_items_;
    models::MixtureBatch val_batch_, test_batch_;
    std::size_t test_count_ = 0;
    num::Tape tape_;
};

std::vector<colsim::Trajectory> select_trajectories(
    const std::vector<colsim::Trajectory>& trajectories, const std::vector<std::size_t>& indices);

// Column system identification on one client's trajectories. All
// trajectories are stored pre-scaled by the supplied scaler (one scaler per
// experiment so every client and baseline sees identical units). Training
// and validation use the combined multistep-plus-reconstruction loss; the
// test metric is the pure multistep rollout MSE over the test trajectories,
// which the scenario supplies separately (long held-out runs rather than a
// slice of the training pool).
class ColumnTask final : public ClientTask {
  public:
    ColumnTask(std::vector<colsim::Trajectory> train, std::vector<colsim::Trajectory> val,
               std::vector<colsim::Trajectory> test, const data::MinMaxScaler& scaler,
               double lambda_rec = 1.0);

    std::size_t train_size() const override { return train_.size(); }
    num::EvalResult train_batch(const num::ParameterVector& params,
                                std::span<const std::size_t> rows) override;
    double validation_loss(const num::ParameterVector& params) override;
    double test_mse(const num::ParameterVector& params) override;

  private:
    std::vector<colsim::Trajectory> train_, val_, test_;
    std::vector<const colsim::Trajectory*> val_ptrs_;
    double lambda_rec_ = 1.0;
    num::Tape tape_;
};

} // namespace fedsilo::fed
