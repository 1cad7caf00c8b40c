#include <utility>

#include "common/errors.hpp"
#include "fed/tasks.hpp"

namespace fedsilo::fed {

const chem::FeaturizedMolecule* MoleculeCache::get(const std::string& smiles) {
    auto it = cache_.find(smiles);
    if (it == cache_.end()) {
        auto molecule = std::make_unique<chem::FeaturizedMolecule>(
            chem::featurize(chem::parse_smiles(smiles)));
        it = cache_.emplace(smiles, std::move(molecule)).first;
    }
    return it->second.get();
}

std::vector<data::ActivitySample> select_samples(const std::vector<data::ActivitySample>& samples,
                                                 const std::vector<std::size_t>& indices) {
    std::vector<data::ActivitySample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(samples.at(i));
    return out;
}

namespace {

num::Tensor temperature_column(const std::vector<data::ActivitySample>& samples) {
    num::Tensor t = num::Tensor::zeros({samples.size(), 1});
    for (std::size_t i = 0; i < samples.size(); ++i) t.data[i] = samples[i].temperature_k;
    return t;
}

std::vector<models::MixtureItem> featurize_samples(const std::vector<data::ActivitySample>& samples,
                                                   const data::MinMaxScaler& scaler,
                                                   MoleculeCache& cache) {
    std::vector<models::MixtureItem> items;
    items.reserve(samples.size());
    for (const data::ActivitySample& s : samples) {
        models::MixtureItem item;
        item.solute = cache.get(s.solute_smiles);
        item.solvent = cache.get(s.solvent_smiles);
        item.temperature_scaled = scaler.transform_value(0, s.temperature_k);
        item.label = s.ln_gamma_inf;
        items.push_back(item);
    }
    return items;
}

} // namespace

ActivityTask::ActivityTask(std::vector<data::ActivitySample> train,
                           std::vector<data::ActivitySample> val,
                           std::vector<data::ActivitySample> test, MoleculeCache& cache) {
    if (train.empty()) throw StructuralError("activity task needs training samples");
    if (val.empty()) throw StructuralError("activity task needs validation samples");
    scaler_ = data::MinMaxScaler::fit(temperature_column(train));
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& s : train) {
        sum += s.ln_gamma_inf;
        sum_sq += s.ln_gamma_inf * s.ln_gamma_inf;
    }
    label_mean_ = sum / double(train.size());
    const double var = sum_sq / double(train.size()) - label_mean_ * label_mean_;
    label_scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
    auto standardize = [&](std::vector<data::ActivitySample>& samples) {
        for (auto& s : samples) s.ln_gamma_inf = (s.ln_gamma_inf - label_mean_) / label_scale_;
    };
    standardize(train);
    standardize(val);
    standardize(test);
    train_items_ = featurize_samples(train, scaler_, cache);
    val_batch_ = models::make_mixture_batch(featurize_samples(val, scaler_, cache));
    test_count_ = test.size();
    if (!test.empty()) test_batch_ = models::make_mixture_batch(featurize_samples(test, scaler_, cache));
}

ActivityTask::ActivityTask(const data::ActivityClient& client, MoleculeCache& cache)
    : ActivityTask(select_samples(client.samples, client.splits.train),
                   select_samples(client.samples, client.splits.val),
                   select_samples(client.samples, client.splits.test), cache) {}

num::EvalResult ActivityTask::train_batch(const num::ParameterVector& params,
                                          std::span<const std::size_t> rows) {
    std::vector<models::MixtureItem> picked;
    picked.reserve(rows.size());
    for (std::size_t r : rows) picked.push_back(train_items_.at(r));
    models::MixtureBatch batch = models::make_mixture_batch(picked);
    return num::forward_backward(tape_, params, models::mixture_loss(batch));
}

double ActivityTask::validation_loss(const num::ParameterVector& params) {
    return num::forward_loss(tape_, params, models::mixture_loss(val_batch_));
}

double ActivityTask::test_mse(const num::ParameterVector& params) {
    if (test_count_ == 0) throw StructuralError("activity task has no test samples");
    return num::forward_loss(tape_, params, models::mixture_loss(test_batch_));
}

metrics::MetricReport ActivityTask::test_report(const num::ParameterVector& params) {
    if (test_count_ == 0) throw StructuralError("activity task has no test samples");
    std::vector<double> predictions = models::predict_mixture_batch(params, test_batch_);
    return metrics::regression_metrics(predictions, test_batch_.labels.data);
}

std::vector<colsim::Trajectory> select_trajectories(
    const std::vector<colsim::Trajectory>& trajectories, const std::vector<std::size_t>& indices) {
    std::vector<colsim::Trajectory> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(trajectories.at(i));
    return out;
}

namespace {

std::vector<colsim::Trajectory> scale_all(const data::MinMaxScaler& scaler,
                                          std::vector<colsim::Trajectory> trajectories) {
    for (colsim::Trajectory& t : trajectories) t = data::scale_trajectory(scaler, t);
    return trajectories;
}

} // namespace

ColumnTask::ColumnTask(std::vector<colsim::Trajectory> train, std::vector<colsim::Trajectory> val,
                       std::vector<colsim::Trajectory> test, const data::MinMaxScaler& scaler,
                       double lambda_rec)
    : train_(scale_all(scaler, std::move(train))),
      val_(scale_all(scaler, std::move(val))),
      test_(scale_all(scaler, std::move(test))),
      lambda_rec_(lambda_rec) {
    if (train_.empty()) throw StructuralError("column task needs training trajectories");
    if (val_.empty()) throw StructuralError("column task needs validation trajectories");
    val_ptrs_.reserve(val_.size());
    for (const colsim::Trajectory& t : val_) val_ptrs_.push_back(&t);
}

num::EvalResult ColumnTask::train_batch(const num::ParameterVector& params,
                                        std::span<const std::size_t> rows) {
    std::vector<const colsim::Trajectory*> picked;
    picked.reserve(rows.size());
    for (std::size_t r : rows) picked.push_back(&train_.at(r));
    models::TrajectoryBatch batch = models::make_trajectory_batch(picked);
    return num::forward_backward(tape_, params, models::trajectory_loss(batch, lambda_rec_));
}

double ColumnTask::validation_loss(const num::ParameterVector& params) {
    models::TrajectoryBatch batch = models::make_trajectory_batch(val_ptrs_);
    return num::forward_loss(tape_, params, models::trajectory_loss(batch, lambda_rec_));
}

double ColumnTask::test_mse(const num::ParameterVector& params) {
    if (test_.empty()) throw StructuralError("column task has no test trajectories");
    return metrics::multistep_mse(params, test_);
}

} // namespace fedsilo::fed
